#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "clinmcq/core/rng.hpp"
#include "clinmcq/ingest/schema.hpp"

namespace clinmcq {

struct DatasetSplit {
  std::set<std::string> train_ids;
  std::set<std::string> test_ids;
  std::uint64_t seed = 0;

  bool in_train(const std::string& id) const { return train_ids.count(id) != 0; }
  bool in_test(const std::string& id) const { return test_ids.count(id) != 0; }
};

/// Random holdout of exactly `n_test` records; deterministic in `seed`.
inline DatasetSplit split_holdout(const std::vector<PatientRecord>& records, std::size_t n_test,
                                  std::uint64_t seed) {
  if (n_test == 0 || n_test >= records.size()) {
    throw InvalidArgument("n_test must satisfy 0 < n_test < " + std::to_string(records.size()) +
                          ", got " + std::to_string(n_test));
  }
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, "split_holdout"));
  rng.shuffle(order);
  DatasetSplit split;
  split.seed = seed;
  for (std::size_t i = 0; i < order.size(); ++i) {
    auto& target = i < n_test ? split.test_ids : split.train_ids;
    target.insert(records[order[i]].patient_id);
  }
  return split;
}

inline std::vector<PatientRecord> select_records(const std::vector<PatientRecord>& records,
                                                 const std::set<std::string>& ids) {
  std::vector<PatientRecord> out;
  out.reserve(ids.size());
  for (const auto& r : records) {
    if (ids.count(r.patient_id)) out.push_back(r);
  }
  return out;
}

inline json to_json(const DatasetSplit& s) {
  return json{{"seed", s.seed},
              {"n_train", s.train_ids.size()},
              {"n_test", s.test_ids.size()},
              {"train_ids", s.train_ids},
              {"test_ids", s.test_ids}};
}

inline DatasetSplit split_from_json(const json& j) {
  DatasetSplit s;
  s.seed = j.at("seed").get<std::uint64_t>();
  s.train_ids = j.at("train_ids").get<std::set<std::string>>();
  s.test_ids = j.at("test_ids").get<std::set<std::string>>();
  for (const auto& id : s.test_ids) {
    if (s.train_ids.count(id)) throw DataError("split: id '" + id + "' in both train and test");
  }
  return s;
}

}  // namespace clinmcq
