#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "clinmcq/core/error.hpp"
#include "clinmcq/core/text.hpp"
#include "clinmcq/forge/question.hpp"

namespace clinmcq {

/// Per-option numeric cues, row-major (n_options x kDim).
struct Cues {
  static constexpr std::size_t kDim = 8;
  // 0: -|value - context median| / step
  // 1: -|value - centre of the options| / step
  // 2..6: option position one-hot (A..E)
  // 7: option frequency rank in [0, 1], 1 = most frequent
  std::size_t n_options = 0;
  std::vector<double> x;

  const double* row(std::size_t i) const { return x.data() + i * kDim; }
};

namespace detail {

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

/// Numbers from "Name: value" lines of the prompt context (the part before the
/// question line). Masked and non-numeric values are skipped.
inline std::vector<double> context_numbers(const std::string& prompt) {
  const auto end = prompt.find("\nQ1.");
  std::vector<double> out;
  for (const auto& line : split(std::string_view(prompt).substr(0, end), '\n')) {
    const auto colon = line.rfind(": ");
    if (colon == std::string::npos) continue;
    if (const auto v = parse_number(trim(std::string_view(line).substr(colon + 2)))) out.push_back(*v);
  }
  return out;
}

}  // namespace detail

inline Cues extract_cues(const Question& q) {
  const auto& opts = q.choices.options;
  const std::size_t n = opts.size();
  Cues c;
  c.n_options = n;
  c.x.assign(n * Cues::kDim, 0.0);

  std::vector<double> values;
  for (const auto& o : opts) {
    if (const auto v = parse_number(o)) values.push_back(*v);
  }
  if (values.size() == n && n >= 2) {
    auto sorted = values;
    std::sort(sorted.begin(), sorted.end());
    double step = (sorted.back() - sorted.front()) / static_cast<double>(n - 1);
    if (!(step > 0)) step = 1.0;
    const double centre = 0.5 * (sorted.front() + sorted.back());
    const auto ctx = detail::context_numbers(q.prompt);
    const double med = ctx.empty() ? 0.0 : detail::median(ctx);
    for (std::size_t i = 0; i < n; ++i) {
      if (!ctx.empty()) c.x[i * Cues::kDim + 0] = -std::min(10.0, std::fabs(values[i] - med) / step);
      c.x[i * Cues::kDim + 1] = -std::min(10.0, std::fabs(values[i] - centre) / step);
    }
  }
  for (std::size_t i = 0; i < n && i < 5; ++i) c.x[i * Cues::kDim + 2 + i] = 1.0;
  const auto& freq = q.choices.option_frequencies;
  if (freq.size() == n && n >= 2) {
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t above = 0;
      for (std::size_t j = 0; j < n; ++j) above += freq[j] > freq[i];
      c.x[i * Cues::kDim + 7] = 1.0 - static_cast<double>(above) / static_cast<double>(n - 1);
    }
  }
  return c;
}

/// Linear softmax over option cues: pi(i) = softmax(theta . x_i).
struct ToyPolicy {
  std::vector<double> theta = std::vector<double>(Cues::kDim, 0.0);

  std::vector<double> probabilities(const Cues& c) const {
    require(theta.size() == Cues::kDim, "toy policy: parameter dimension mismatch");
    std::vector<double> logit(c.n_options);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < c.n_options; ++i) {
      double s = 0;
      const double* r = c.row(i);
      for (std::size_t d = 0; d < Cues::kDim; ++d) s += theta[d] * r[d];
      logit[i] = s;
      mx = std::max(mx, s);
    }
    double z = 0;
    for (auto& l : logit) z += (l = std::exp(l - mx));
    for (auto& l : logit) l /= z;
    return logit;
  }

  double log_prob(const Cues& c, std::size_t action) const {
    return std::log(probabilities(c).at(action));
  }

  /// d log pi(action) / d theta = x_action - sum_i pi_i x_i.
  std::vector<double> grad_log_prob(const Cues& c, std::size_t action,
                                    const std::vector<double>& probs) const {
    std::vector<double> g(c.row(action), c.row(action) + Cues::kDim);
    for (std::size_t i = 0; i < c.n_options; ++i) {
      const double* r = c.row(i);
      for (std::size_t d = 0; d < Cues::kDim; ++d) g[d] -= probs[i] * r[d];
    }
    return g;
  }

  /// Highest-probability option; ties go to the earliest letter.
  std::size_t argmax(const Cues& c) const {
    const auto p = probabilities(c);
    return static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
  }
};

}  // namespace clinmcq
