#pragma once

#include <optional>
#include <string>
#include <vector>

#include "clinmcq/core/parallel.hpp"
#include "clinmcq/distractor/choices.hpp"
#include "clinmcq/distractor/gmm.hpp"
#include "clinmcq/ingest/schema.hpp"

namespace clinmcq {

struct EngineOptions {
  double difficulty = 2.0;
  std::size_t k_options = 5;
  GmmOptions gmm;
};

/// Per-feature answer-option models fitted on training records: a mixture for
/// each continuous feature and a frequency table for each categorical one.
/// Immutable after construction.
class DistractorEngine {
 public:
  DistractorEngine() = default;

  DistractorEngine(const std::vector<PatientRecord>& train, const Schema& schema,
                   EngineOptions opts = {}, const Executor& exec = {})
      : opts_(opts), schema_(schema) {
    check_option_count(opts_.k_options);
    require(opts_.difficulty > 0.0, "difficulty must be positive");
    const std::size_t n = schema.size();
    gmms_.resize(n);
    freqs_.resize(n);
    std::vector<std::vector<std::string>> warnings(n);
    parallel_for(n, exec, [&](std::size_t j) {
      const auto& f = schema[j];
      if (f.kind == FeatureKind::Continuous) {
        std::vector<double> values;
        for (const auto& r : train) {
          if (const auto* d = std::get_if<double>(&r.values[j])) values.push_back(*d);
        }
        if (values.empty()) return;
        auto fit = fit_gmm(values, opts_.gmm);
        for (auto& w : fit.warnings) warnings[j].push_back("'" + f.name + "': " + w);
        gmms_[j] = std::move(fit.model);
      } else {
        FrequencyTable table;
        for (const auto& r : train) {
          if (const auto* s = std::get_if<std::string>(&r.values[j])) table[*s] += 1.0;
        }
        freqs_[j] = std::move(table);
      }
    });
    for (auto& w : warnings) warnings_.insert(warnings_.end(), w.begin(), w.end());
  }

  const EngineOptions& options() const { return opts_; }
  const std::vector<std::string>& warnings() const { return warnings_; }
  const std::optional<GmmModel>& gmm(FeatureId f) const { return gmms_.at(f); }
  const FrequencyTable& frequencies(FeatureId f) const { return freqs_.at(f); }

  /// Whether a question about this feature can in principle be formed.
  bool eligible(FeatureId f) const {
    if (schema_[f].kind == FeatureKind::Continuous) return gmms_.at(f).has_value();
    std::size_t positive = 0;
    for (const auto& [_, c] : freqs_.at(f)) positive += c > 0.0;
    return positive >= 2;
  }

  /// Options for the true value of feature f. Throws GenerationError (or
  /// SchemaError for an out-of-bounds truth) when no valid set exists.
  ChoiceSet make_choices(FeatureId f, const Value& truth, Rng& rng) const {
    const auto& spec = schema_[f];
    if (const auto* d = std::get_if<double>(&truth)) {
      if (!gmms_.at(f)) throw GenerationError("no mixture fitted for '" + spec.name + "'");
      return continuous_choices(*gmms_[f], *d, opts_.difficulty, opts_.k_options, spec, rng);
    }
    if (const auto* s = std::get_if<std::string>(&truth)) {
      return categorical_choices(freqs_.at(f), *s, opts_.k_options, rng);
    }
    throw GenerationError("target value is missing");
  }

 private:
  EngineOptions opts_;
  Schema schema_;
  std::vector<std::optional<GmmModel>> gmms_;
  std::vector<FrequencyTable> freqs_;
  std::vector<std::string> warnings_;
};

}  // namespace clinmcq
