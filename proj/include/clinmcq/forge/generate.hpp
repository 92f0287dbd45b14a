#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "clinmcq/core/parallel.hpp"
#include "clinmcq/forge/builders.hpp"

namespace clinmcq {

enum class GenerationMode {
  Sampled,     // uniform (patient, feature) pairs until `count` questions
  Exhaustive,  // every patient x target, with missingness accounting
};

struct GenerateConfig {
  GenerationMode mode = GenerationMode::Sampled;
  std::size_t count = 30000;
  std::uint64_t seed = 1;
  std::vector<FeatureId> targets;  // empty: every feature
};

struct GenerationSummary {
  std::size_t eligible_pairs = 0;
  std::size_t examined = 0;
  std::size_t emitted = 0;
  std::size_t failures = 0;
  std::vector<TaskAccounting> accounting;  // exhaustive mode only
  std::vector<std::string> warnings;
};

namespace detail {

struct Pair {
  std::uint32_t patient;
  std::uint32_t feature;
};

inline std::vector<FeatureId> resolve_targets(const Schema& schema, const std::vector<FeatureId>& t) {
  if (!t.empty()) {
    for (auto id : t) require(id < schema.size(), "generate: target id out of range");
    return t;
  }
  std::vector<FeatureId> all(schema.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return all;
}

}  // namespace detail

/// Builds denoising questions from `records` (callers pass the training split
/// for training corpora) and streams them to `writer` in a deterministic order.
///
/// Sampled mode enumerates every eligible (patient, feature) pair with a
/// present value, visits them in a seeded uniformly random order, and keeps
/// the first `count` that yield a question. Exhaustive mode visits every
/// patient for each target and records per-target missing/failed counts.
/// Per-question streams depend only on (seed, patient, feature), so chunking
/// and thread count never change the output.
inline GenerationSummary generate_dataset(const std::vector<PatientRecord>& records,
                                          const Schema& schema, const RedundancyFilter* filter,
                                          const DistractorEngine& engine,
                                          const TemplateSet& templates, const GenerateConfig& cfg,
                                          QuestionWriter& writer, const Executor& exec = {}) {
  GenerationSummary summary;
  const auto targets = detail::resolve_targets(schema, cfg.targets);
  constexpr std::size_t kMaxChunk = 2048;

  if (cfg.mode == GenerationMode::Exhaustive) {
    for (FeatureId t : targets) {
      TaskAccounting acc;
      acc.task = schema[t].name;
      acc.n_test = records.size();
      std::vector<BuildResult> built;
      for (std::size_t start = 0; start < records.size(); start += kMaxChunk) {
        const std::size_t n = std::min(kMaxChunk, records.size() - start);
        built.assign(n, BuildResult{});
        parallel_for(n, exec, [&](std::size_t i) {
          built[i] = build_denoising_question(records[start + i], schema, t, filter, engine,
                                              templates, cfg.seed);
        });
        for (auto& b : built) {
          ++summary.examined;
          if (b.ok()) {
            writer.write(*b.question);
            ++acc.n_emitted;
            ++summary.emitted;
          } else if (b.reason == SkipReason::MissingTarget) {
            ++acc.n_missing_skipped;
          } else {
            ++acc.n_generation_failures;
            ++summary.failures;
          }
        }
      }
      summary.accounting.push_back(acc);
    }
    writer.write_accounting(summary.accounting);
    return summary;
  }

  std::vector<bool> usable(schema.size(), false);
  for (FeatureId t : targets) usable[t] = engine.eligible(t);
  std::vector<detail::Pair> pairs;
  for (std::size_t p = 0; p < records.size(); ++p) {
    for (FeatureId t : targets) {
      if (usable[t] && !is_missing(records[p].values[t])) {
        pairs.push_back({static_cast<std::uint32_t>(p), static_cast<std::uint32_t>(t)});
      }
    }
  }
  summary.eligible_pairs = pairs.size();

  Rng order_rng(derive_seed(cfg.seed, "generate/order"));
  std::size_t pos = 0;
  std::vector<BuildResult> built;
  while (summary.emitted < cfg.count && pos < pairs.size()) {
    const std::size_t need = cfg.count - summary.emitted;
    const std::size_t n = std::min({pairs.size() - pos, need + need / 8 + 8, kMaxChunk});
    // Lazy partial Fisher-Yates: positions [pos, pos + n) become the next
    // uniformly random candidates.
    for (std::size_t i = pos; i < pos + n; ++i) {
      std::swap(pairs[i], pairs[i + order_rng.index(pairs.size() - i)]);
    }
    built.assign(n, BuildResult{});
    parallel_for(n, exec, [&](std::size_t i) {
      const auto& pr = pairs[pos + i];
      built[i] = build_denoising_question(records[pr.patient], schema, pr.feature, filter, engine,
                                          templates, cfg.seed);
    });
    for (std::size_t i = 0; i < n && summary.emitted < cfg.count; ++i) {
      ++summary.examined;
      if (built[i].ok()) {
        writer.write(*built[i].question);
        ++summary.emitted;
      } else {
        ++summary.failures;
      }
    }
    pos += n;
  }
  if (summary.emitted < cfg.count) {
    summary.warnings.push_back("eligible pairs exhausted: emitted " + std::to_string(summary.emitted) +
                               " of " + std::to_string(cfg.count) + " requested (" +
                               std::to_string(summary.eligible_pairs) + " eligible, " +
                               std::to_string(summary.failures) + " failed)");
  }
  return summary;
}

}  // namespace clinmcq
