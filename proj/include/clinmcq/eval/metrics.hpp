#pragma once

#include <algorithm>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "clinmcq/core/text.hpp"
#include "clinmcq/eval/predict.hpp"
#include "clinmcq/forge/question.hpp"

namespace clinmcq {

struct TaskRow {
  std::string task;
  std::size_t n_test = 0;
  std::size_t n_missing_skipped = 0;
  std::size_t n_generation_failures = 0;
  std::size_t n_evaluated = 0;
  std::size_t n_correct = 0;
  double accuracy = 0;
  double macro_f1 = 0;
};

struct EvalReport {
  std::string model_tag;
  std::string config_hash;
  std::vector<TaskRow> rows;  // sorted by task name
  std::size_t n_evaluated = 0;
  std::size_t n_correct = 0;
  double accuracy = 0;
};

struct ScoredQuestion {
  std::string question_id;
  std::string task;
  std::string gold;
  std::string predicted;  // empty when no letter
  bool correct = false;
};

/// Joins predictions to questions. Unknown or duplicate prediction ids and
/// questions without a prediction are DataErrors.
inline std::vector<ScoredQuestion> score_questions(const std::vector<Question>& questions,
                                                   const std::vector<Prediction>& predictions) {
  std::unordered_map<std::string, const Prediction*> by_id;
  for (const auto& p : predictions) {
    if (!by_id.emplace(p.question_id, &p).second) {
      throw DataError("duplicate prediction for question '" + p.question_id + "'");
    }
  }
  std::set<std::string> qids;
  std::vector<ScoredQuestion> out;
  out.reserve(questions.size());
  for (const auto& q : questions) {
    qids.insert(q.question_id);
    const auto it = by_id.find(q.question_id);
    if (it == by_id.end()) throw DataError("no prediction for question '" + q.question_id + "'");
    ScoredQuestion s;
    s.question_id = q.question_id;
    s.task = q.target;
    s.gold = q.choices.answer_text();
    const auto letter = final_letter(*it->second, q.choices.size());
    if (letter) {
      const auto idx = *letter_index(*letter);
      s.predicted = q.choices.options[idx];
      s.correct = idx == q.choices.answer_index;
    }
    out.push_back(std::move(s));
  }
  for (const auto& p : predictions) {
    if (!qids.count(p.question_id)) throw DataError("prediction for unknown question '" + p.question_id + "'");
  }
  return out;
}

/// Unweighted mean of per-class F1 over the classes present in `gold`.
/// A missing prediction counts against its gold class only.
inline double macro_f1(const std::vector<std::string>& gold, const std::vector<std::string>& predicted) {
  std::map<std::string, std::size_t> tp, fp, fn;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i] == predicted[i]) {
      ++tp[gold[i]];
    } else {
      ++fn[gold[i]];
      if (!predicted[i].empty()) ++fp[predicted[i]];
    }
  }
  const std::set<std::string> classes(gold.begin(), gold.end());
  if (classes.empty()) return 0.0;
  double sum = 0;
  for (const auto& c : classes) {
    const double t = static_cast<double>(tp[c]);
    const double denom = 2 * t + static_cast<double>(fp[c]) + static_cast<double>(fn[c]);
    sum += denom > 0 ? 2 * t / denom : 0.0;
  }
  return sum / static_cast<double>(classes.size());
}

/// Per-task accuracy and macro-F1. Skip counts come from the question file's
/// accounting when present; otherwise every question counts as one test case.
inline EvalReport score_metrics(const QuestionFile& file, const std::vector<Prediction>& predictions,
                                std::string model_tag = {}) {
  const auto scored = score_questions(file.questions, predictions);
  std::map<std::string, std::vector<const ScoredQuestion*>> by_task;
  for (const auto& s : scored) by_task[s.task].push_back(&s);
  std::map<std::string, TaskAccounting> acc;
  for (const auto& a : file.accounting) acc[a.task] = a;

  EvalReport r;
  r.model_tag = model_tag.empty() && !predictions.empty() ? predictions.front().model_tag : model_tag;
  std::set<std::string> tasks;
  for (const auto& [t, _] : by_task) tasks.insert(t);
  for (const auto& [t, _] : acc) tasks.insert(t);
  for (const auto& t : tasks) {
    TaskRow row;
    row.task = t;
    const auto& items = by_task[t];
    row.n_evaluated = items.size();
    if (const auto a = acc.find(t); a != acc.end()) {
      row.n_test = a->second.n_test;
      row.n_missing_skipped = a->second.n_missing_skipped;
      row.n_generation_failures = a->second.n_generation_failures;
      if (row.n_test != row.n_missing_skipped + row.n_generation_failures + row.n_evaluated) {
        throw DataError("task '" + t + "': accounting does not match the questions present");
      }
    } else {
      row.n_test = items.size();
    }
    std::vector<std::string> gold, pred;
    for (const auto* s : items) {
      row.n_correct += s->correct;
      gold.push_back(s->gold);
      pred.push_back(s->predicted);
    }
    row.accuracy = row.n_evaluated ? static_cast<double>(row.n_correct) / static_cast<double>(row.n_evaluated) : 0.0;
    row.macro_f1 = macro_f1(gold, pred);
    r.n_evaluated += row.n_evaluated;
    r.n_correct += row.n_correct;
    r.rows.push_back(std::move(row));
  }
  r.accuracy = r.n_evaluated ? static_cast<double>(r.n_correct) / static_cast<double>(r.n_evaluated) : 0.0;
  return r;
}

inline json to_json(const TaskRow& t) {
  return json{{"task", t.task},
              {"n_test", t.n_test},
              {"n_missing_skipped", t.n_missing_skipped},
              {"n_generation_failures", t.n_generation_failures},
              {"n_evaluated", t.n_evaluated},
              {"n_correct", t.n_correct},
              {"accuracy", t.accuracy},
              {"macro_f1", t.macro_f1}};
}

inline json to_json(const EvalReport& r) {
  json rows = json::array();
  for (const auto& t : r.rows) rows.push_back(to_json(t));
  return json{{"format", "clinmcq.eval_report"},
              {"model_tag", r.model_tag},
              {"config_hash", r.config_hash},
              {"n_evaluated", r.n_evaluated},
              {"n_correct", r.n_correct},
              {"accuracy", r.accuracy},
              {"tasks", rows}};
}

inline EvalReport eval_report_from_json(const json& j) {
  EvalReport r;
  try {
    r.model_tag = j.value("model_tag", std::string());
    r.config_hash = j.value("config_hash", std::string());
    r.n_evaluated = j.value("n_evaluated", std::size_t{0});
    r.n_correct = j.value("n_correct", std::size_t{0});
    r.accuracy = j.value("accuracy", 0.0);
    for (const auto& t : j.at("tasks")) {
      TaskRow row;
      row.task = t.at("task").get<std::string>();
      row.n_test = t.at("n_test").get<std::size_t>();
      row.n_missing_skipped = t.at("n_missing_skipped").get<std::size_t>();
      row.n_generation_failures = t.value("n_generation_failures", std::size_t{0});
      row.n_evaluated = t.at("n_evaluated").get<std::size_t>();
      row.n_correct = t.value("n_correct", std::size_t{0});
      row.accuracy = t.at("accuracy").get<double>();
      row.macro_f1 = t.value("macro_f1", 0.0);
      r.rows.push_back(std::move(row));
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed eval report: ") + e.what());
  }
  return r;
}

// Per-feature ranking ---------------------------------------------------------

struct FeatureRanking {
  std::vector<TaskRow> ranked;    // accuracy descending, then name
  std::vector<TaskRow> excluded;  // n_evaluated == 0
};

inline FeatureRanking report_per_feature(const EvalReport& report) {
  FeatureRanking out;
  for (const auto& r : report.rows) (r.n_evaluated ? out.ranked : out.excluded).push_back(r);
  std::sort(out.ranked.begin(), out.ranked.end(), [](const TaskRow& a, const TaskRow& b) {
    if (a.accuracy != b.accuracy) return a.accuracy > b.accuracy;
    return a.task < b.task;
  });
  return out;
}

inline void write_ranking_tsv(std::ostream& out, const FeatureRanking& r) {
  out << "rank\tfeature\taccuracy\tmacro_f1\tn_evaluated\tn_test\tn_missing_skipped\n";
  std::size_t rank = 0;
  for (const auto& t : r.ranked) {
    out << ++rank << '\t' << t.task << '\t' << format_fixed(t.accuracy, 4) << '\t' << format_fixed(t.macro_f1, 4)
        << '\t' << t.n_evaluated << '\t' << t.n_test << '\t' << t.n_missing_skipped << '\n';
  }
  for (const auto& t : r.excluded) {
    out << "#\t" << t.task << "\texcluded: n_evaluated = 0 (n_test " << t.n_test << ", missing "
        << t.n_missing_skipped << ")\n";
  }
}

inline json ranking_plot_json(const FeatureRanking& r) {
  json labels = json::array(), acc = json::array(), n = json::array();
  for (const auto& t : r.ranked) {
    labels.push_back(t.task);
    acc.push_back(t.accuracy);
    n.push_back(t.n_evaluated);
  }
  json excluded = json::array();
  for (const auto& t : r.excluded) excluded.push_back(t.task);
  return json{{"format", "clinmcq.feature_ranking"},
              {"x", labels},
              {"accuracy", acc},
              {"n_evaluated", n},
              {"excluded", excluded}};
}

}  // namespace clinmcq
