#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "clinmcq/core/rng.hpp"
#include "clinmcq/core/text.hpp"
#include "clinmcq/distractor/gmm.hpp"
#include "clinmcq/ingest/schema.hpp"

namespace clinmcq {

enum class ChoiceProvenance { ContinuousGmm, CategoricalFrequency, FixedTemplate };

inline const char* to_string(ChoiceProvenance p) {
  switch (p) {
    case ChoiceProvenance::ContinuousGmm: return "continuous_gmm";
    case ChoiceProvenance::CategoricalFrequency: return "categorical_frequency";
    case ChoiceProvenance::FixedTemplate: return "fixed_template";
  }
  return "unknown";
}

inline ChoiceProvenance parse_provenance(const std::string& s) {
  if (s == "continuous_gmm") return ChoiceProvenance::ContinuousGmm;
  if (s == "categorical_frequency") return ChoiceProvenance::CategoricalFrequency;
  if (s == "fixed_template") return ChoiceProvenance::FixedTemplate;
  throw DataError("unknown choice provenance '" + s + "'");
}

inline constexpr std::size_t kMinOptions = 2;
inline constexpr std::size_t kMaxOptions = 5;

struct ChoiceSet {
  std::vector<std::string> options;      // rendered texts, lettered A.. in order
  std::size_t answer_index = 0;
  std::vector<double> raw_values;        // continuous: grid values, in option order
  std::vector<double> option_frequencies;  // categorical: train counts, in option order
  ChoiceProvenance provenance = ChoiceProvenance::CategoricalFrequency;
  std::optional<double> margin;
  std::optional<std::size_t> component;

  std::size_t size() const { return options.size(); }
  char answer_letter() const { return option_letter(answer_index); }
  const std::string& answer_text() const { return options.at(answer_index); }
};

/// Options truth + m * step for m in [lo, hi], all in integer units of
/// 10^-precision so that rounding can never break the progression.
struct ArithmeticGrid {
  std::int64_t truth_units = 0;
  std::int64_t step_units = 1;
  int lo = 0;
  int hi = 0;
  int precision = 0;

  std::size_t count() const { return static_cast<std::size_t>(hi - lo + 1); }
  double value(int m) const { return from_grid_units(truth_units + m * step_units, precision); }
  std::vector<double> values() const {
    std::vector<double> v;
    for (int m = lo; m <= hi; ++m) v.push_back(value(m));
    return v;
  }
};

namespace detail {

/// Offsets in [lo_limit, hi_limit] whose grid values satisfy the bounds.
inline std::pair<std::int64_t, std::int64_t> feasible_offsets(const ArithmeticGrid& g,
                                                              std::int64_t step_units,
                                                              const Bounds& b) {
  constexpr std::int64_t kFar = 1'000'000;
  const double scale = pow10i(g.precision);
  auto value = [&](std::int64_t m) { return from_grid_units(g.truth_units + m * step_units, g.precision); };
  std::int64_t m_min = -kFar, m_max = kFar;
  if (std::isfinite(b.low)) {
    m_min = static_cast<std::int64_t>(
        std::ceil((b.low * scale - static_cast<double>(g.truth_units)) / static_cast<double>(step_units)));
    m_min = std::max(m_min, -kFar);
    while (m_min > -kFar && b.contains(value(m_min - 1))) --m_min;
    while (m_min <= 0 && !b.contains(value(m_min))) ++m_min;
  }
  if (std::isfinite(b.high)) {
    m_max = static_cast<std::int64_t>(
        std::floor((b.high * scale - static_cast<double>(g.truth_units)) / static_cast<double>(step_units)));
    m_max = std::min(m_max, kFar);
    while (m_max < kFar && b.contains(value(m_max + 1))) ++m_max;
    while (m_max >= 0 && !b.contains(value(m_max))) --m_max;
  }
  return {m_min, m_max};
}

}  // namespace detail

/// Removes implausible options. When dropping out-of-bounds values would lose
/// options, the progression is translated by whole steps to fit the bounds;
/// if the bounds are narrower than the progression it shrinks (minimum two
/// options), and if even two options cannot fit at this step the step is
/// reduced. The truth never moves.
inline ArithmeticGrid plausibility_postprocess(ArithmeticGrid g, const FeatureSpec& spec) {
  if (!spec.bounds) return g;
  const Bounds& b = *spec.bounds;
  const double truth = from_grid_units(g.truth_units, g.precision);
  if (!b.contains(truth)) {
    throw SchemaError("true value " + format_fixed(truth, g.precision) + " of '" + spec.name +
                      "' violates its bounds");
  }
  const std::int64_t n = g.hi - g.lo + 1;
  for (std::int64_t step = g.step_units; step >= 1; --step) {
    const auto [m_min, m_max] = detail::feasible_offsets(g, step, b);
    const std::int64_t available = m_max - m_min + 1;
    if (available < 2) continue;
    std::int64_t lo, hi;
    if (step == g.step_units) {
      lo = g.lo;
      hi = g.hi;
    } else {
      const std::int64_t n2 = std::min(n, available);
      lo = -(n2 / 2);
      hi = lo + n2 - 1;
    }
    if (available >= hi - lo + 1) {
      if (lo < m_min) {
        hi += m_min - lo;
        lo = m_min;
      }
      if (hi > m_max) {
        lo -= hi - m_max;
        hi = m_max;
      }
    } else {
      lo = m_min;
      hi = m_max;
    }
    g.step_units = step;
    g.lo = static_cast<int>(lo);
    g.hi = static_cast<int>(hi);
    return g;
  }
  throw GenerationError("bounds of '" + spec.name + "' admit fewer than two options");
}

/// Value-level form: `raw_values` must be an arithmetic progression on the
/// feature's precision grid containing `truth`.
inline std::vector<double> plausibility_postprocess(std::vector<double> raw_values, double truth,
                                                    const FeatureSpec& spec) {
  require(raw_values.size() >= 2, "plausibility_postprocess: need at least two values");
  std::sort(raw_values.begin(), raw_values.end());
  const int p = spec.precision;
  ArithmeticGrid g;
  g.precision = p;
  g.truth_units = to_grid_units(truth, p);
  g.step_units = to_grid_units(raw_values[1], p) - to_grid_units(raw_values[0], p);
  require(g.step_units > 0, "plausibility_postprocess: values must be distinct");
  std::optional<int> truth_pos;
  for (std::size_t i = 0; i < raw_values.size(); ++i) {
    const auto u = to_grid_units(raw_values[i], p);
    require(u - to_grid_units(raw_values[0], p) == static_cast<std::int64_t>(i) * g.step_units,
            "plausibility_postprocess: values are not an arithmetic progression");
    if (u == g.truth_units) truth_pos = static_cast<int>(i);
  }
  require(truth_pos.has_value(), "plausibility_postprocess: truth not among values");
  g.lo = -*truth_pos;
  g.hi = static_cast<int>(raw_values.size()) - 1 - *truth_pos;
  return plausibility_postprocess(g, spec).values();
}

/// Arithmetic grid around the truth for a given margin (half-width of the
/// option span). step = margin / floor(k/2), snapped to the precision grid;
/// a step finer than one grid unit becomes one unit and the option count
/// drops to the grid points within the margin (minimum two).
inline ArithmeticGrid arithmetic_grid(double true_value, double margin, std::size_t k_options,
                                      int precision) {
  ArithmeticGrid g;
  g.precision = precision;
  g.truth_units = to_grid_units(true_value, precision);
  const double scale = pow10i(precision);
  const auto half = static_cast<double>(k_options / 2);
  const double step_real_units = margin / half * scale;
  std::int64_t n = static_cast<std::int64_t>(k_options);
  if (step_real_units >= 1.0) {
    g.step_units = std::max<std::int64_t>(1, std::llround(step_real_units));
  } else {
    g.step_units = 1;
    const auto margin_units = static_cast<std::int64_t>(std::floor(margin * scale + 1e-9));
    n = std::max<std::int64_t>(2, std::min<std::int64_t>(n, 2 * margin_units + 1));
  }
  g.lo = static_cast<int>(-(n / 2));
  g.hi = static_cast<int>((n + 1) / 2 - 1);
  return g;
}

inline void check_option_count(std::size_t k_options) {
  require(k_options >= kMinOptions && k_options <= kMaxOptions,
          "k_options must be in [2, 5], got " + std::to_string(k_options));
}

/// Continuous options: sample a mixture component from the truth's posterior,
/// set margin = difficulty * component sd, lay out the arithmetic grid, apply
/// plausibility bounds, then shuffle.
inline ChoiceSet continuous_choices(const GmmModel& model, double true_value, double difficulty,
                                    std::size_t k_options, const FeatureSpec& spec, Rng& rng) {
  check_option_count(k_options);
  require(difficulty > 0.0, "difficulty must be positive");
  const std::size_t component = sample_component(model, true_value, rng);
  const double margin = difficulty * model.sd(component);
  const auto grid = plausibility_postprocess(
      arithmetic_grid(true_value, margin, k_options, spec.precision), spec);
  if (grid.count() < kMinOptions) {
    throw GenerationError("fewer than two options for '" + spec.name + "'");
  }

  std::vector<int> order;
  for (int m = grid.lo; m <= grid.hi; ++m) order.push_back(m);
  rng.shuffle(order);

  ChoiceSet cs;
  cs.provenance = ChoiceProvenance::ContinuousGmm;
  cs.margin = margin;
  cs.component = component;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const double v = grid.value(order[i]);
    cs.raw_values.push_back(v);
    cs.options.push_back(format_fixed(v, spec.precision));
    if (order[i] == 0) cs.answer_index = i;
  }
  return cs;
}

using FrequencyTable = std::map<std::string, double>;

/// Categorical options: distractors drawn without replacement from the other
/// values, weighted by train-split frequency; zero-frequency values are never
/// drawn.
inline ChoiceSet categorical_choices(const FrequencyTable& frequencies, const std::string& true_value,
                                     std::size_t k_options, Rng& rng) {
  check_option_count(k_options);
  if (!frequencies.count(true_value)) {
    throw GenerationError("value '" + true_value + "' absent from the frequency table");
  }
  std::vector<std::string> pool;
  std::vector<double> weights;
  for (const auto& [value, freq] : frequencies) {
    if (value == true_value || !(freq > 0.0)) continue;
    pool.push_back(value);
    weights.push_back(freq);
  }
  if (pool.empty()) throw GenerationError("only one distinct value; cannot form a question");

  std::vector<std::string> picked{true_value};
  const std::size_t want = std::min(k_options - 1, pool.size());
  while (picked.size() - 1 < want) {
    const auto i = rng.weighted_index(weights);
    picked.push_back(pool[i]);
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(i));
    weights.erase(weights.begin() + static_cast<std::ptrdiff_t>(i));
  }
  rng.shuffle(picked);

  ChoiceSet cs;
  cs.provenance = ChoiceProvenance::CategoricalFrequency;
  for (std::size_t i = 0; i < picked.size(); ++i) {
    if (picked[i] == true_value) cs.answer_index = i;
    cs.option_frequencies.push_back(frequencies.at(picked[i]));
    cs.options.push_back(std::move(picked[i]));
  }
  return cs;
}

}  // namespace clinmcq
