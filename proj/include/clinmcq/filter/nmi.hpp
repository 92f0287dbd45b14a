#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "clinmcq/core/hash.hpp"
#include "clinmcq/core/parallel.hpp"
#include "clinmcq/ingest/schema.hpp"

namespace clinmcq {

struct NmiOptions {
  std::size_t bins = 10;
  std::size_t min_support = 30;
};

/// A feature column mapped to small integer codes. Continuous values go to
/// quantile bins over the column's non-missing values; categorical values to
/// the rank of their text among the column's distinct values.
struct CodedColumn {
  static constexpr std::uint16_t kMissing = 0xFFFF;
  std::vector<std::uint16_t> codes;
  std::size_t levels = 0;
};

inline std::vector<double> quantile_cuts(std::vector<double> values, std::size_t bins) {
  std::vector<double> cuts;
  if (values.empty() || bins < 2) return cuts;
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  for (std::size_t q = 1; q < bins; ++q) {
    const double c = values[std::min(n - 1, q * n / bins)];
    if (cuts.empty() || c > cuts.back()) cuts.push_back(c);
  }
  return cuts;
}

inline CodedColumn code_column(const std::vector<PatientRecord>& records, const FeatureSpec& f,
                               std::size_t bins) {
  CodedColumn col;
  col.codes.assign(records.size(), CodedColumn::kMissing);
  if (f.kind == FeatureKind::Continuous) {
    std::vector<double> values;
    values.reserve(records.size());
    for (const auto& r : records) {
      if (const auto* d = std::get_if<double>(&r.values[f.id])) values.push_back(*d);
    }
    const auto cuts = quantile_cuts(values, bins);
    col.levels = cuts.size() + 1;
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (const auto* d = std::get_if<double>(&records[i].values[f.id])) {
        col.codes[i] = static_cast<std::uint16_t>(
            std::upper_bound(cuts.begin(), cuts.end(), *d) - cuts.begin());
      }
    }
  } else {
    std::map<std::string, std::uint16_t> levels;
    for (const auto& r : records) {
      if (const auto* s = std::get_if<std::string>(&r.values[f.id])) levels.emplace(*s, 0);
    }
    if (levels.size() >= CodedColumn::kMissing) {
      throw DataError("feature '" + f.name + "' has too many distinct values to code");
    }
    std::uint16_t next = 0;
    for (auto& [_, code] : levels) code = next++;
    col.levels = levels.size();
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (const auto* s = std::get_if<std::string>(&records[i].values[f.id])) {
        col.codes[i] = levels.at(*s);
      }
    }
  }
  return col;
}

struct NmiResult {
  double nmi = 0.0;
  std::size_t support = 0;
};

namespace detail {

/// Entropy in nats of a count vector with total n: log n - (1/n) sum c log c.
template <typename Counts>
double entropy_from_counts(const Counts& counts, double n) {
  double acc = 0.0;
  for (const auto c : counts) {
    if (c > 0) acc += static_cast<double>(c) * std::log(static_cast<double>(c));
  }
  return std::log(n) - acc / n;
}

}  // namespace detail

/// Plug-in normalized mutual information I / sqrt(H(X) H(Y)) over rows where
/// both codes are present. Zero when support < min_support or either marginal
/// entropy is zero.
inline NmiResult nmi_from_codes(const CodedColumn& x, const CodedColumn& y,
                                std::size_t min_support) {
  NmiResult out;
  const std::size_t nx = std::max<std::size_t>(x.levels, 1);
  const std::size_t ny = std::max<std::size_t>(y.levels, 1);
  std::vector<std::uint32_t> mx(nx, 0), my(ny, 0);
  std::vector<std::uint32_t> dense;
  std::unordered_map<std::uint64_t, std::uint32_t> sparse;
  const bool use_dense = nx * ny <= (std::size_t{1} << 20);
  if (use_dense) dense.assign(nx * ny, 0);

  const std::size_t rows = x.codes.size();
  const auto* xc = x.codes.data();
  const auto* yc = y.codes.data();
  std::size_t n = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    const auto a = xc[r];
    const auto b = yc[r];
    if (a == CodedColumn::kMissing || b == CodedColumn::kMissing) continue;
    ++n;
    ++mx[a];
    ++my[b];
    if (use_dense) {
      ++dense[a * ny + b];
    } else {
      ++sparse[static_cast<std::uint64_t>(a) * ny + b];
    }
  }
  out.support = n;
  if (n == 0 || n < min_support) return out;
  const double nn = static_cast<double>(n);
  const double hx = detail::entropy_from_counts(mx, nn);
  const double hy = detail::entropy_from_counts(my, nn);
  if (hx <= 0.0 || hy <= 0.0) return out;
  double hxy;
  if (use_dense) {
    hxy = detail::entropy_from_counts(dense, nn);
  } else {
    std::vector<std::uint32_t> cells;
    cells.reserve(sparse.size());
    std::vector<std::pair<std::uint64_t, std::uint32_t>> sorted(sparse.begin(), sparse.end());
    std::sort(sorted.begin(), sorted.end());
    for (const auto& kv : sorted) cells.push_back(kv.second);
    hxy = detail::entropy_from_counts(cells, nn);
  }
  const double mi = hx + hy - hxy;
  double ratio = mi / std::sqrt(hx * hy);
  // A one-to-one relation lands within rounding of 1; report it as exactly 1.
  if (ratio > 1.0 - 1e-12) ratio = 1.0;
  out.nmi = std::clamp(ratio, 0.0, 1.0);
  return out;
}

inline NmiResult estimate_nmi_detail(const std::vector<PatientRecord>& records,
                                     const Schema& schema, FeatureId a, FeatureId b,
                                     const NmiOptions& opts = {}) {
  if (a >= schema.size() || b >= schema.size()) {
    throw InvalidArgument("estimate_nmi: unknown feature id");
  }
  require(opts.bins >= 2, "estimate_nmi: bins must be >= 2");
  // Fixed argument order makes the score exactly symmetric.
  if (b < a) std::swap(a, b);
  const auto x = code_column(records, schema[a], opts.bins);
  const auto y = code_column(records, schema[b], opts.bins);
  return nmi_from_codes(x, y, opts.min_support);
}

inline double estimate_nmi(const std::vector<PatientRecord>& records, const Schema& schema,
                           FeatureId a, FeatureId b, const NmiOptions& opts = {}) {
  return estimate_nmi_detail(records, schema, a, b, opts).nmi;
}

inline double estimate_nmi(const std::vector<PatientRecord>& records, const Schema& schema,
                           const std::string& a, const std::string& b,
                           const NmiOptions& opts = {}) {
  return estimate_nmi(records, schema, schema.find(a), schema.find(b), opts);
}

/// Symmetric pairwise NMI grid with pairwise-complete supports.
struct DependenceMatrix {
  std::size_t n = 0;
  std::size_t bins = 10;
  std::size_t min_support = 30;
  std::vector<double> values;          // n*n, row-major
  std::vector<std::uint32_t> support;  // n*n

  double at(FeatureId i, FeatureId j) const { return values[i * n + j]; }
  std::uint32_t support_at(FeatureId i, FeatureId j) const { return support[i * n + j]; }
};

inline DependenceMatrix build_dependence_matrix(const std::vector<PatientRecord>& records,
                                                const Schema& schema, const NmiOptions& opts = {},
                                                const Executor& exec = {}) {
  require(opts.bins >= 2, "dependence matrix: bins must be >= 2");
  const std::size_t n = schema.size();
  std::vector<CodedColumn> cols(n);
  parallel_for(n, exec, [&](std::size_t i) { cols[i] = code_column(records, schema[i], opts.bins); });

  DependenceMatrix m;
  m.n = n;
  m.bins = opts.bins;
  m.min_support = opts.min_support;
  m.values.assign(n * n, 0.0);
  m.support.assign(n * n, 0);
  parallel_for(n, exec, [&](std::size_t i) {
    for (std::size_t j = i; j < n; ++j) {
      const auto r = nmi_from_codes(cols[i], cols[j], opts.min_support);
      double v = r.nmi;
      if (i == j && v > 0.0) v = 1.0;
      m.values[i * n + j] = v;
      m.values[j * n + i] = v;
      m.support[i * n + j] = static_cast<std::uint32_t>(r.support);
      m.support[j * n + i] = static_cast<std::uint32_t>(r.support);
    }
  });
  return m;
}

/// Per-target sets of features hidden from the prompt when that target is
/// masked: every other feature whose NMI with the target exceeds the threshold,
/// plus any perfectly dependent one (NMI == 1), so threshold 1.0 still drops
/// exact duplicates.
struct RedundancyFilter {
  double threshold = 0.5;
  std::size_t bins = 10;
  std::vector<std::vector<FeatureId>> excluded;  // indexed by target, sorted

  const std::vector<FeatureId>& excluded_for(FeatureId target) const {
    static const std::vector<FeatureId> kEmpty;
    return target < excluded.size() ? excluded[target] : kEmpty;
  }
  bool is_excluded(FeatureId target, FeatureId f) const {
    const auto& e = excluded_for(target);
    return std::binary_search(e.begin(), e.end(), f);
  }
};

inline RedundancyFilter build_redundancy_filter(const DependenceMatrix& m, double threshold) {
  require(threshold > 0.0 && threshold <= 1.0, "redundancy filter: threshold must be in (0, 1]");
  RedundancyFilter f;
  f.threshold = threshold;
  f.bins = m.bins;
  f.excluded.resize(m.n);
  for (std::size_t t = 0; t < m.n; ++t) {
    for (std::size_t j = 0; j < m.n; ++j) {
      const double v = m.at(t, j);
      if (j != t && (v > threshold || v == 1.0)) f.excluded[t].push_back(j);
    }
  }
  return f;
}

inline RedundancyFilter build_redundancy_filter(const std::vector<PatientRecord>& records,
                                                const Schema& schema, double threshold,
                                                std::size_t bins = 10, const Executor& exec = {}) {
  require(threshold > 0.0 && threshold <= 1.0, "redundancy filter: threshold must be in (0, 1]");
  NmiOptions opts;
  opts.bins = bins;
  return build_redundancy_filter(build_dependence_matrix(records, schema, opts, exec), threshold);
}

/// Order-sensitive digest of record contents, used to key cached matrices.
inline std::string records_fingerprint(const std::vector<PatientRecord>& records) {
  Fnv1a h;
  for (const auto& r : records) {
    h.update(r.patient_id).update("\x1e");
    for (const auto& v : r.values) {
      if (const auto* d = std::get_if<double>(&v)) {
        h.update("n").update(std::string_view(reinterpret_cast<const char*>(d), sizeof(double)));
      } else if (const auto* s = std::get_if<std::string>(&v)) {
        h.update("t").update(*s).update("\x1f");
      } else {
        h.update("m");
      }
    }
  }
  return to_hex(h.digest());
}

inline json to_json(const DependenceMatrix& m, const Schema& schema, const std::string& data_hash) {
  json names = json::array();
  for (const auto& f : schema.features) names.push_back(f.name);
  return json{{"format", "clinmcq.dependence_matrix"},
              {"version", 1},
              {"data_hash", data_hash},
              {"bins", m.bins},
              {"min_support", m.min_support},
              {"n", m.n},
              {"features", names},
              {"values", m.values},
              {"support", m.support}};
}

inline DependenceMatrix dependence_matrix_from_json(const json& j) {
  if (j.value("format", "") != "clinmcq.dependence_matrix") {
    throw DataError("not a dependence matrix artifact");
  }
  DependenceMatrix m;
  m.n = j.at("n").get<std::size_t>();
  m.bins = j.at("bins").get<std::size_t>();
  m.min_support = j.at("min_support").get<std::size_t>();
  m.values = j.at("values").get<std::vector<double>>();
  m.support = j.at("support").get<std::vector<std::uint32_t>>();
  if (m.values.size() != m.n * m.n || m.support.size() != m.n * m.n) {
    throw DataError("dependence matrix artifact has inconsistent size");
  }
  return m;
}

inline json to_json(const RedundancyFilter& f, const Schema& schema) {
  json excluded = json::object();
  for (std::size_t t = 0; t < f.excluded.size(); ++t) {
    if (f.excluded[t].empty()) continue;
    json names = json::array();
    for (auto id : f.excluded[t]) names.push_back(schema[id].name);
    excluded[schema[t].name] = names;
  }
  return json{{"format", "clinmcq.redundancy_filter"},
              {"threshold", f.threshold},
              {"bins", f.bins},
              {"excluded", excluded}};
}

inline RedundancyFilter redundancy_filter_from_json(const json& j, const Schema& schema) {
  if (j.value("format", "") != "clinmcq.redundancy_filter") {
    throw DataError("not a redundancy filter artifact");
  }
  RedundancyFilter f;
  f.threshold = j.at("threshold").get<double>();
  f.bins = j.at("bins").get<std::size_t>();
  f.excluded.resize(schema.size());
  for (const auto& [target, names] : j.at("excluded").items()) {
    auto& set = f.excluded[schema.find(target)];
    for (const auto& n : names) set.push_back(schema.find(n.get<std::string>()));
    std::sort(set.begin(), set.end());
  }
  return f;
}

}  // namespace clinmcq
