#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "clinmcq/core/rng.hpp"
#include "clinmcq/ingest/schema.hpp"

namespace clinmcq {

/// Ground truth planted by synthesize_registry, for tests.
struct PlantedComponent {
  double weight, mean, sd;
};

struct PlantedFeature {
  std::vector<PlantedComponent> mixture;     // continuous
  std::vector<std::string> categories;       // categorical
  std::vector<double> category_weights;      // categorical
  std::optional<FeatureId> derived_from;     // planted dependency source
};

struct SynthOptions {
  bool plant_dependencies = true;
  std::string id_column = "patient_id";
};

struct SynthResult {
  Table table;
  std::vector<PlantedFeature> truth;
  std::vector<std::pair<FeatureId, FeatureId>> planted_pairs;  // (source, derived)
};

/// Registry-shaped fake data. Feature j is categorical when j % 5 == 4, else
/// continuous; continuous features come from 2- or 3-component normal
/// mixtures. With plant_dependencies, every feature j with j % 10 == 1 is a
/// near-deterministic affine function of feature j - 1. Features with
/// j % 4 == 0 are nonnegative (|x|) and carry bounds [0, inf).
inline SynthResult synthesize_registry(std::size_t n_patients, std::size_t n_features,
                                       std::uint64_t seed, double missing_rate,
                                       const SynthOptions& opts = {}) {
  require(n_patients > 0 && n_features > 0, "synthesize_registry: counts must be positive");
  require(missing_rate >= 0.0 && missing_rate < 1.0, "synthesize_registry: missing_rate in [0,1)");

  SynthResult out;
  auto& schema = out.table.schema;
  schema.id_column = opts.id_column;
  out.truth.resize(n_features);

  Rng meta(derive_seed(seed, "synth/meta"));
  for (FeatureId j = 0; j < n_features; ++j) {
    FeatureSpec f;
    f.id = j;
    char name[32];
    std::snprintf(name, sizeof name, "Feature %04zu", j);
    f.name = name;
    f.section = {"Section " + std::to_string(j / 50 + 1), "Group " + std::to_string(j / 10 + 1)};
    auto& t = out.truth[j];
    if (j % 5 == 4) {
      f.kind = FeatureKind::Categorical;
      const std::size_t n_cat = 2 + meta.index(5);  // 2..6
      for (std::size_t c = 0; c < n_cat; ++c) {
        t.categories.push_back("Level " + std::string(1, static_cast<char>('A' + c)));
        t.category_weights.push_back(1.0 + static_cast<double>(meta.index(9)));
      }
    } else {
      f.kind = FeatureKind::Continuous;
      f.unit = "u" + std::to_string(j % 7);
      f.precision = static_cast<int>(j % 3);
      const std::size_t k = 2 + meta.index(2);  // 2..3
      const double base = meta.uniform() * 20.0;
      double wsum = 0.0;
      for (std::size_t c = 0; c < k; ++c) {
        PlantedComponent pc;
        pc.weight = 1.0 + meta.uniform();
        pc.mean = base + 6.0 * static_cast<double>(c) * (0.5 + meta.uniform());
        pc.sd = 0.5 + meta.uniform() * 1.5;
        wsum += pc.weight;
        t.mixture.push_back(pc);
      }
      for (auto& pc : t.mixture) pc.weight /= wsum;
      if (j % 4 == 0) f.bounds = Bounds{0.0, std::numeric_limits<double>::infinity()};
      if (opts.plant_dependencies && j % 10 == 1) {
        t.derived_from = j - 1;
        out.planted_pairs.emplace_back(j - 1, j);
      }
    }
    schema.features.push_back(std::move(f));
  }

  auto& records = out.table.records;
  records.resize(n_patients);
  for (std::size_t p = 0; p < n_patients; ++p) {
    auto& rec = records[p];
    char id[32];
    std::snprintf(id, sizeof id, "P%06zu", p + 1);
    rec.patient_id = id;
    Rng rng(derive_seed(seed, rec.patient_id));
    rec.values.resize(n_features);
    std::vector<double> raw(n_features, 0.0);
    for (FeatureId j = 0; j < n_features; ++j) {
      const auto& t = out.truth[j];
      const auto& f = schema.features[j];
      const bool missing = missing_rate > 0.0 && rng.bernoulli(missing_rate);
      if (f.kind == FeatureKind::Categorical) {
        const std::size_t c = rng.weighted_index(t.category_weights);
        if (!missing) rec.values[j] = t.categories[c];
        continue;
      }
      double x;
      if (t.derived_from) {
        x = 1.5 * raw[*t.derived_from] + 2.0 + rng.normal(0.0, 0.02);
      } else {
        std::vector<double> w;
        for (const auto& pc : t.mixture) w.push_back(pc.weight);
        const auto& pc = t.mixture[rng.weighted_index(w)];
        x = rng.normal(pc.mean, pc.sd);
      }
      if (f.bounds) x = std::fabs(x);
      raw[j] = x;
      if (!missing) {
        rec.values[j] = from_grid_units(to_grid_units(x, f.precision), f.precision);
      }
    }
  }
  return out;
}

}  // namespace clinmcq
