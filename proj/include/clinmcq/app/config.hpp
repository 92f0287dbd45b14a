#pragma once

#include <optional>
#include <string>

#include "clinmcq/core/hash.hpp"
#include "clinmcq/distractor/engine.hpp"
#include "clinmcq/filter/nmi.hpp"
#include "clinmcq/grpo/trainer.hpp"
#include "clinmcq/infer/openai.hpp"
#include "clinmcq/ingest/csv.hpp"

namespace clinmcq {

/// Every tunable of the pipeline. Defaults are the published settings where
/// one exists.
struct PipelineConfig {
  std::uint64_t seed = 1;
  unsigned jobs = 0;  // 0: logical cores

  // redundancy filter
  double mi_threshold = 0.5;
  std::size_t mi_bins = 10;
  std::size_t mi_min_support = 30;

  // distractors
  double difficulty = 2.0;
  std::size_t k_options = 5;
  std::size_t gmm_components = 3;
  std::size_t gmm_max_iter = 200;
  double gmm_tol = 1e-7;

  // datasets
  std::size_t n_test = 1000;
  std::size_t question_count = 30000;
  std::optional<std::string> templates_dir;

  GrpoConfig grpo;
  std::size_t grpo_steps = 2000;

  EndpointConfig endpoint;
  std::string model_tag = "model";
  std::size_t max_tokens = 512;
  double temperature = 0.0;

  Executor executor() const { return jobs ? Executor{jobs} : Executor::hardware(); }

  EngineOptions engine_options() const {
    EngineOptions e;
    e.difficulty = difficulty;
    e.k_options = k_options;
    e.gmm.components = gmm_components;
    e.gmm.max_iter = gmm_max_iter;
    e.gmm.tol = gmm_tol;
    return e;
  }

  NmiOptions nmi_options() const {
    NmiOptions o;
    o.bins = mi_bins;
    o.min_support = mi_min_support;
    return o;
  }

  void validate() const {
    require(mi_threshold > 0 && mi_threshold <= 1, "config: mi_threshold must be in (0, 1]");
    require(mi_bins >= 2, "config: mi_bins must be >= 2");
    require(difficulty > 0, "config: difficulty must be positive");
    require(k_options >= kMinOptions && k_options <= kMaxOptions, "config: k_options must be in [2, 5]");
    require(gmm_components >= 1, "config: gmm_components must be >= 1");
    grpo.validate();
  }
};

inline json to_json(const PipelineConfig& c) {
  return json{
      {"seed", c.seed},
      {"jobs", c.jobs},
      {"filter", {{"mi_threshold", c.mi_threshold}, {"mi_bins", c.mi_bins}, {"min_support", c.mi_min_support}}},
      {"distractor",
       {{"difficulty", c.difficulty},
        {"k_options", c.k_options},
        {"gmm_components", c.gmm_components},
        {"gmm_max_iter", c.gmm_max_iter},
        {"gmm_tol", c.gmm_tol}}},
      {"dataset",
       {{"n_test", c.n_test},
        {"question_count", c.question_count},
        {"templates_dir", c.templates_dir ? json(*c.templates_dir) : json(nullptr)}}},
      {"grpo",
       {{"group_size", c.grpo.group_size},
        {"batch_questions", c.grpo.batch_questions},
        {"clip_epsilon", c.grpo.clip_epsilon},
        {"kl_coefficient", c.grpo.kl_coefficient},
        {"learning_rate", c.grpo.learning_rate},
        {"epsilon_std", c.grpo.epsilon_std},
        {"updates_per_batch", c.grpo.updates_per_batch},
        {"steps", c.grpo_steps}}},
      {"endpoint", to_json(c.endpoint)},
      {"inference", {{"model_tag", c.model_tag}, {"max_tokens", c.max_tokens}, {"temperature", c.temperature}}},
  };
}

/// Overlays the keys present in `j` onto `base`. Unknown keys are an error.
inline PipelineConfig config_from_json(const json& j, PipelineConfig c = {}) {
  auto check_keys = [](const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!obj.is_object()) throw InvalidArgument("config: '" + where + "' must be an object");
    for (const auto& [k, _] : obj.items()) {
      if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return k == a; })) {
        throw InvalidArgument("config: unknown key '" + (where.empty() ? k : where + "." + k) + "'");
      }
    }
  };
  try {
    check_keys(j, {"seed", "jobs", "filter", "distractor", "dataset", "grpo", "endpoint", "inference"}, "");
    c.seed = j.value("seed", c.seed);
    c.jobs = j.value("jobs", c.jobs);
    if (j.contains("filter")) {
      const auto& f = j["filter"];
      check_keys(f, {"mi_threshold", "mi_bins", "min_support"}, "filter");
      c.mi_threshold = f.value("mi_threshold", c.mi_threshold);
      c.mi_bins = f.value("mi_bins", c.mi_bins);
      c.mi_min_support = f.value("min_support", c.mi_min_support);
    }
    if (j.contains("distractor")) {
      const auto& d = j["distractor"];
      check_keys(d, {"difficulty", "k_options", "gmm_components", "gmm_max_iter", "gmm_tol"}, "distractor");
      c.difficulty = d.value("difficulty", c.difficulty);
      c.k_options = d.value("k_options", c.k_options);
      c.gmm_components = d.value("gmm_components", c.gmm_components);
      c.gmm_max_iter = d.value("gmm_max_iter", c.gmm_max_iter);
      c.gmm_tol = d.value("gmm_tol", c.gmm_tol);
    }
    if (j.contains("dataset")) {
      const auto& d = j["dataset"];
      check_keys(d, {"n_test", "question_count", "templates_dir"}, "dataset");
      c.n_test = d.value("n_test", c.n_test);
      c.question_count = d.value("question_count", c.question_count);
      if (d.contains("templates_dir")) {
        c.templates_dir = d["templates_dir"].is_null() ? std::nullopt
                                                       : std::optional<std::string>(d["templates_dir"].get<std::string>());
      }
    }
    if (j.contains("grpo")) {
      const auto& g = j["grpo"];
      check_keys(g, {"group_size", "batch_questions", "clip_epsilon", "kl_coefficient", "learning_rate", "epsilon_std",
                     "updates_per_batch", "steps"},
                 "grpo");
      c.grpo.group_size = g.value("group_size", c.grpo.group_size);
      c.grpo.batch_questions = g.value("batch_questions", c.grpo.batch_questions);
      c.grpo.clip_epsilon = g.value("clip_epsilon", c.grpo.clip_epsilon);
      c.grpo.kl_coefficient = g.value("kl_coefficient", c.grpo.kl_coefficient);
      c.grpo.learning_rate = g.value("learning_rate", c.grpo.learning_rate);
      c.grpo.epsilon_std = g.value("epsilon_std", c.grpo.epsilon_std);
      c.grpo.updates_per_batch = g.value("updates_per_batch", c.grpo.updates_per_batch);
      c.grpo_steps = g.value("steps", c.grpo_steps);
    }
    if (j.contains("endpoint")) {
      check_keys(j["endpoint"], {"endpoint_url", "auth_token_env", "model_name", "max_in_flight", "timeout_s", "retries",
                                 "backoff_initial_s", "per_token_mean"},
                 "endpoint");
      auto merged = to_json(c.endpoint);
      merged.update(j["endpoint"]);
      c.endpoint = endpoint_from_json(merged);
    }
    if (j.contains("inference")) {
      const auto& i = j["inference"];
      check_keys(i, {"model_tag", "max_tokens", "temperature"}, "inference");
      c.model_tag = i.value("model_tag", c.model_tag);
      c.max_tokens = i.value("max_tokens", c.max_tokens);
      c.temperature = i.value("temperature", c.temperature);
    }
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("config: ") + e.what());
  }
  c.grpo.seed = c.seed;
  return c;
}

inline PipelineConfig load_config(const std::string& path) {
  try {
    return config_from_json(json::parse(csv::read_file(path)));
  } catch (const json::parse_error& e) {
    throw InvalidArgument("config " + path + ": " + e.what());
  }
}

/// Digest of the resolved configuration (keys sorted by the serializer).
/// Hash of the settings that affect results; the worker count is left out.
inline std::string config_hash(const PipelineConfig& c) {
  auto j = to_json(c);
  j.erase("jobs");
  return hash_hex(j.dump());
}

}  // namespace clinmcq
