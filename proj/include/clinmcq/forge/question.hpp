#pragma once

#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "clinmcq/distractor/choices.hpp"
#include "clinmcq/ingest/schema.hpp"

namespace clinmcq {

enum class QuestionKind { Denoising, OutcomePrediction, TimeSeriesValue };

inline const char* to_string(QuestionKind k) {
  switch (k) {
    case QuestionKind::Denoising: return "denoising";
    case QuestionKind::OutcomePrediction: return "outcome_prediction";
    case QuestionKind::TimeSeriesValue: return "timeseries_value";
  }
  return "unknown";
}

inline QuestionKind parse_question_kind(const std::string& s) {
  if (s == "denoising") return QuestionKind::Denoising;
  if (s == "outcome_prediction") return QuestionKind::OutcomePrediction;
  if (s == "timeseries_value") return QuestionKind::TimeSeriesValue;
  throw DataError("unknown question kind '" + s + "'");
}

inline constexpr const char* kCotPrefix = "Let's think step by step.";

struct Question {
  std::string question_id;
  std::string patient_id;
  std::string target;                   // feature name or outcome task tag
  std::optional<FeatureId> target_id;   // set for feature targets
  QuestionKind kind = QuestionKind::Denoising;
  std::string prompt;
  std::string assistant_prefix = kCotPrefix;
  ChoiceSet choices;
  std::vector<FeatureId> excluded_features;
  std::vector<std::uint64_t> seed_trace;

  char answer_letter() const { return choices.answer_letter(); }
};

/// Per-task counts carried from generation to evaluation.
struct TaskAccounting {
  std::string task;
  std::size_t n_test = 0;
  std::size_t n_missing_skipped = 0;
  std::size_t n_generation_failures = 0;
  std::size_t n_emitted = 0;
};

inline json to_json(const Question& q) {
  json j;
  j["type"] = "question";
  j["question_id"] = q.question_id;
  j["patient_id"] = q.patient_id;
  j["target"] = q.target;
  j["target_id"] = q.target_id ? json(*q.target_id) : json(nullptr);
  j["kind"] = to_string(q.kind);
  j["prompt"] = q.prompt;
  j["assistant_prefix"] = q.assistant_prefix;
  j["options"] = q.choices.options;
  j["answer_index"] = q.choices.answer_index;
  j["provenance"] = to_string(q.choices.provenance);
  j["margin"] = q.choices.margin ? json(*q.choices.margin) : json(nullptr);
  j["component"] = q.choices.component ? json(*q.choices.component) : json(nullptr);
  j["raw_values"] = q.choices.raw_values;
  j["option_frequencies"] = q.choices.option_frequencies;
  j["excluded_features"] = q.excluded_features;
  j["seed_trace"] = q.seed_trace;
  return j;
}

inline Question question_from_json(const json& j) {
  Question q;
  try {
    q.question_id = j.at("question_id").get<std::string>();
    q.patient_id = j.at("patient_id").get<std::string>();
    q.target = j.at("target").get<std::string>();
    if (j.contains("target_id") && !j["target_id"].is_null()) {
      q.target_id = j["target_id"].get<FeatureId>();
    }
    q.kind = parse_question_kind(j.at("kind").get<std::string>());
    q.prompt = j.at("prompt").get<std::string>();
    q.assistant_prefix = j.value("assistant_prefix", std::string(kCotPrefix));
    q.choices.options = j.at("options").get<std::vector<std::string>>();
    q.choices.answer_index = j.at("answer_index").get<std::size_t>();
    q.choices.provenance = parse_provenance(j.value("provenance", std::string("fixed_template")));
    if (j.contains("margin") && !j["margin"].is_null()) q.choices.margin = j["margin"].get<double>();
    if (j.contains("component") && !j["component"].is_null()) {
      q.choices.component = j["component"].get<std::size_t>();
    }
    q.choices.raw_values = j.value("raw_values", std::vector<double>{});
    q.choices.option_frequencies = j.value("option_frequencies", std::vector<double>{});
    q.excluded_features = j.value("excluded_features", std::vector<FeatureId>{});
    q.seed_trace = j.value("seed_trace", std::vector<std::uint64_t>{});
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed question record: ") + e.what());
  }
  if (q.choices.options.size() < kMinOptions || q.choices.options.size() > kMaxOptions ||
      q.choices.answer_index >= q.choices.options.size()) {
    throw DataError("question '" + q.question_id + "': invalid options/answer");
  }
  return q;
}

inline json to_json(const TaskAccounting& a) {
  return json{{"task", a.task},
              {"n_test", a.n_test},
              {"n_missing_skipped", a.n_missing_skipped},
              {"n_generation_failures", a.n_generation_failures},
              {"n_emitted", a.n_emitted}};
}

inline TaskAccounting accounting_from_json(const json& j) {
  TaskAccounting a;
  a.task = j.at("task").get<std::string>();
  a.n_test = j.at("n_test").get<std::size_t>();
  a.n_missing_skipped = j.at("n_missing_skipped").get<std::size_t>();
  a.n_generation_failures = j.at("n_generation_failures").get<std::size_t>();
  a.n_emitted = j.value("n_emitted", std::size_t{0});
  return a;
}

/// Line-delimited question file: a header line, one line per question, and an
/// optional trailing accounting line.
struct QuestionFile {
  json header;
  std::vector<Question> questions;
  std::vector<TaskAccounting> accounting;
};

class QuestionWriter {
 public:
  QuestionWriter(std::ostream& out, json header) : out_(out) {
    header["type"] = "header";
    header["format"] = "clinmcq.questions";
    header["version"] = 1;
    out_ << header.dump() << '\n';
  }

  void write(const Question& q) {
    out_ << to_json(q).dump() << '\n';
    ++count_;
  }

  void write_accounting(const std::vector<TaskAccounting>& tasks) {
    json arr = json::array();
    for (const auto& t : tasks) arr.push_back(to_json(t));
    out_ << json{{"type", "accounting"}, {"tasks", arr}}.dump() << '\n';
  }

  std::size_t count() const { return count_; }

 private:
  std::ostream& out_;
  std::size_t count_ = 0;
};

inline QuestionFile read_questions(std::istream& in) {
  QuestionFile file;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError("question file line " + std::to_string(lineno) + ": " + e.what());
    }
    const auto type = j.value("type", std::string("question"));
    if (type == "header") {
      file.header = std::move(j);
    } else if (type == "accounting") {
      for (const auto& t : j.at("tasks")) file.accounting.push_back(accounting_from_json(t));
    } else {
      file.questions.push_back(question_from_json(j));
    }
  }
  return file;
}

inline QuestionFile read_question_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open question file " + path);
  return read_questions(in);
}

}  // namespace clinmcq
