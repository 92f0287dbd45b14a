#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "clinmcq/core/error.hpp"
#include "clinmcq/core/rng.hpp"

namespace clinmcq {

/// One-dimensional Gaussian mixture. `log_likelihood_trace` holds the mean
/// per-observation log-likelihood evaluated at the start of each EM iteration.
struct GmmModel {
  std::vector<double> weights;
  std::vector<double> means;
  std::vector<double> variances;
  std::vector<double> log_likelihood_trace;
  double variance_floor = 1e-6;

  std::size_t k() const { return weights.size(); }
  double sd(std::size_t j) const { return std::sqrt(variances.at(j)); }
};

struct GmmOptions {
  std::size_t components = 3;
  std::size_t max_iter = 200;
  double tol = 1e-7;
};

struct GmmFit {
  GmmModel model;
  std::vector<std::string> warnings;
};

namespace detail {

inline double log_normal_pdf(double x, double mean, double var) {
  const double d = x - mean;
  return -0.5 * (std::log(2.0 * std::numbers::pi * var) + d * d / var);
}

inline double interpolated_quantile(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

/// Log of w_j N(x; m_j, v_j) for each component, written into `out`.
inline void component_log_densities(const GmmModel& m, double x, std::vector<double>& out) {
  out.resize(m.k());
  for (std::size_t j = 0; j < m.k(); ++j) {
    out[j] = m.weights[j] > 0.0
                 ? std::log(m.weights[j]) + log_normal_pdf(x, m.means[j], m.variances[j])
                 : -std::numeric_limits<double>::infinity();
  }
}

inline double log_sum_exp(const std::vector<double>& v) {
  const double hi = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(hi)) return hi;
  double s = 0.0;
  for (double x : v) s += std::exp(x - hi);
  return hi + std::log(s);
}

}  // namespace detail

/// EM fit. Initial means sit at the (2i+1)/(2k) quantiles, weights are equal
/// and every variance starts at the sample variance. Iteration stops when the
/// mean log-likelihood improves by less than `tol` or after `max_iter` rounds.
/// If fewer than k distinct values exist, k drops to the distinct count.
inline GmmFit fit_gmm(std::span<const double> values, const GmmOptions& opts = {}) {
  if (values.empty()) throw InvalidArgument("fit_gmm: no values");
  require(opts.components >= 1, "fit_gmm: components must be >= 1");
  GmmFit fit;
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  std::size_t k = opts.components;
  {
    std::vector<double> u(sorted);
    const std::size_t d = static_cast<std::size_t>(std::unique(u.begin(), u.end()) - u.begin());
    if (d < k) {
      fit.warnings.push_back("fit_gmm: only " + std::to_string(d) + " distinct values; k reduced from " +
                             std::to_string(k) + " to " + std::to_string(std::max<std::size_t>(d, 1)));
      k = std::max<std::size_t>(d, 1);
    }
  }

  const std::size_t n = sorted.size();
  const double nn = static_cast<double>(n);
  double mean = 0.0;
  for (double x : sorted) mean += x;
  mean /= nn;
  double var = 0.0;
  for (double x : sorted) var += (x - mean) * (x - mean);
  var /= nn;

  GmmModel& m = fit.model;
  m.variance_floor = std::max(1e-6, 1e-4 * var);
  for (std::size_t j = 0; j < k; ++j) {
    m.weights.push_back(1.0 / static_cast<double>(k));
    m.means.push_back(detail::interpolated_quantile(
        sorted, (2.0 * static_cast<double>(j) + 1.0) / (2.0 * static_cast<double>(k))));
    m.variances.push_back(std::max(var, m.variance_floor));
  }

  std::vector<double> resp(n * k);
  std::vector<double> logd;
  for (std::size_t iter = 0; iter < opts.max_iter; ++iter) {
    // E-step
    std::vector<double> offset(k), inv2var(k);
    for (std::size_t j = 0; j < k; ++j) {
      offset[j] = m.weights[j] > 0.0
                      ? std::log(m.weights[j]) - 0.5 * std::log(2.0 * std::numbers::pi * m.variances[j])
                      : -std::numeric_limits<double>::infinity();
      inv2var[j] = 0.5 / m.variances[j];
    }
    logd.resize(k);
    double ll = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double x = values[i];
      double hi = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < k; ++j) {
        const double d = x - m.means[j];
        logd[j] = offset[j] - d * d * inv2var[j];
        hi = std::max(hi, logd[j]);
      }
      double sum = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        const double e = std::exp(logd[j] - hi);
        resp[i * k + j] = e;
        sum += e;
      }
      ll += hi + std::log(sum);
      const double inv = 1.0 / sum;
      for (std::size_t j = 0; j < k; ++j) resp[i * k + j] *= inv;
    }
    ll /= nn;
    if (!std::isfinite(ll)) throw NumericError("fit_gmm: non-finite log-likelihood");
    const bool converged =
        !m.log_likelihood_trace.empty() && ll - m.log_likelihood_trace.back() < opts.tol;
    m.log_likelihood_trace.push_back(ll);
    if (converged) break;

    // M-step
    for (std::size_t j = 0; j < k; ++j) {
      double nk = 0.0, sx = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        nk += resp[i * k + j];
        sx += resp[i * k + j] * values[i];
      }
      if (nk <= 0.0) {
        m.weights[j] = 0.0;
        continue;
      }
      const double mj = sx / nk;
      double sv = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = values[i] - mj;
        sv += resp[i * k + j] * d * d;
      }
      m.weights[j] = nk / nn;
      m.means[j] = mj;
      m.variances[j] = std::max(sv / nk, m.variance_floor);
    }
    double wsum = 0.0;
    for (double w : m.weights) wsum += w;
    for (double& w : m.weights) w /= wsum;
  }
  return fit;
}

inline GmmFit fit_gmm(std::span<const double> values, std::size_t k, std::size_t max_iter = 200,
                      double tol = 1e-7) {
  return fit_gmm(values, GmmOptions{k, max_iter, tol});
}

/// Posterior responsibilities of each component for observation x.
inline std::vector<double> posterior(const GmmModel& m, double x) {
  std::vector<double> logd;
  detail::component_log_densities(m, x, logd);
  const double lse = detail::log_sum_exp(logd);
  std::vector<double> p(m.k());
  for (std::size_t j = 0; j < m.k(); ++j) p[j] = std::exp(logd[j] - lse);
  return p;
}

/// Draws a component index with probability proportional to
/// w_j N(true_value; m_j, v_j).
inline std::size_t sample_component(const GmmModel& m, double true_value, Rng& rng) {
  if (m.k() == 1) return 0;
  const auto p = posterior(m, true_value);
  const auto j = rng.weighted_index(p);
  return j < m.k() ? j : 0;
}

inline nlohmann::json to_json(const GmmModel& m) {
  return nlohmann::json{{"weights", m.weights}, {"means", m.means}, {"variances", m.variances}};
}

}  // namespace clinmcq
