#pragma once

#include <algorithm>
#include <cctype>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "clinmcq/core/rng.hpp"
#include "clinmcq/distractor/engine.hpp"
#include "clinmcq/filter/nmi.hpp"
#include "clinmcq/forge/question.hpp"
#include "clinmcq/forge/render.hpp"
#include "clinmcq/forge/template.hpp"

namespace clinmcq {

enum class SkipReason { None, MissingTarget, GenerationFailed, MissingLabel, InsufficientHistory };

inline const char* to_string(SkipReason r) {
  switch (r) {
    case SkipReason::None: return "none";
    case SkipReason::MissingTarget: return "missing_target";
    case SkipReason::GenerationFailed: return "generation_failed";
    case SkipReason::MissingLabel: return "missing_label";
    case SkipReason::InsufficientHistory: return "insufficient_history";
  }
  return "unknown";
}

/// A built question, or the reason none was built. Skips are values, not errors.
struct BuildResult {
  std::optional<Question> question;
  SkipReason reason = SkipReason::None;
  std::string detail;

  bool ok() const { return question.has_value(); }

  static BuildResult skip(SkipReason r, std::string detail = {}) {
    BuildResult b;
    b.reason = r;
    b.detail = std::move(detail);
    return b;
  }
};

inline std::string question_stream_key(const std::string& patient_id, const std::string& target) {
  return patient_id + '\x1f' + target;
}

/// Denoising question: the record with `target` masked and its redundant
/// features hidden, followed by lettered options and the boxed-answer
/// instruction. The options come from a stream derived from
/// (seed, patient, target).
inline BuildResult build_denoising_question(const PatientRecord& record, const Schema& schema,
                                            FeatureId target, const RedundancyFilter* filter,
                                            const DistractorEngine& engine,
                                            const TemplateSet& templates, std::uint64_t seed) {
  const auto& spec = schema[target];
  const auto& truth = record.values.at(target);
  if (is_missing(truth)) return BuildResult::skip(SkipReason::MissingTarget);

  const std::uint64_t stream = derive_seed(seed, question_stream_key(record.patient_id, spec.name));
  Rng rng(stream);
  Question q;
  try {
    q.choices = engine.make_choices(target, truth, rng);
  } catch (const GenerationError& e) {
    return BuildResult::skip(SkipReason::GenerationFailed, e.what());
  } catch (const SchemaError& e) {
    return BuildResult::skip(SkipReason::GenerationFailed, e.what());
  }
  if (filter) q.excluded_features = filter->excluded_for(target);

  q.question_id = record.patient_id + ":" + std::to_string(target);
  q.patient_id = record.patient_id;
  q.target = spec.name;
  q.target_id = target;
  q.kind = QuestionKind::Denoising;
  q.seed_trace = {seed, stream};
  q.prompt = templates.denoising.render({
      {"context", render_record(record, schema, q.excluded_features, target)},
      {"feature", spec.name},
      {"section", spec.section_path()},
      {"options", render_options(q.choices)},
      {"instruction", kAnswerInstruction},
  });
  BuildResult r;
  r.question = std::move(q);
  return r;
}

// Outcome prediction ---------------------------------------------------------

enum class OutcomeTask { InHospitalMortality, Aki48h, Mrs3Month, Mace1Year };

inline const char* to_string(OutcomeTask t) {
  switch (t) {
    case OutcomeTask::InHospitalMortality: return "in_hospital_mortality";
    case OutcomeTask::Aki48h: return "aki_48h";
    case OutcomeTask::Mrs3Month: return "mrs_3month";
    case OutcomeTask::Mace1Year: return "mace_1year";
  }
  return "unknown";
}

inline OutcomeTask parse_outcome_task(const std::string& s) {
  for (auto t : {OutcomeTask::InHospitalMortality, OutcomeTask::Aki48h, OutcomeTask::Mrs3Month,
                 OutcomeTask::Mace1Year}) {
    if (s == to_string(t)) return t;
  }
  throw InvalidArgument("unknown outcome task '" + s + "'");
}

inline const PromptTemplate& template_for(const TemplateSet& t, OutcomeTask task) {
  switch (task) {
    case OutcomeTask::InHospitalMortality: return t.mortality;
    case OutcomeTask::Aki48h: return t.aki_48h;
    case OutcomeTask::Mrs3Month: return t.mrs_3month;
    case OutcomeTask::Mace1Year: return t.mace_1year;
  }
  return t.mortality;
}

inline constexpr int kMrsClasses = 7;  // scores 0..6

/// Canonical label text for the task: "yes"/"no" for binary outcomes, "0".."6"
/// for mRS. Returns nullopt for labels outside the task's classes.
inline std::optional<std::string> normalize_outcome_label(OutcomeTask task, const Value& label) {
  if (is_missing(label)) return std::nullopt;
  std::string text;
  if (const auto* d = std::get_if<double>(&label)) {
    if (*d != std::floor(*d)) return std::nullopt;
    text = std::to_string(static_cast<long long>(*d));
  } else {
    text = std::string(trim(std::get<std::string>(label)));
  }
  std::transform(text.begin(), text.end(), text.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (task == OutcomeTask::Mrs3Month) {
    const auto v = parse_number(text);
    if (!v || *v != std::floor(*v) || *v < 0 || *v >= kMrsClasses) return std::nullopt;
    return std::to_string(static_cast<int>(*v));
  }
  if (text == "yes" || text == "1" || text == "true") return "yes";
  if (text == "no" || text == "0" || text == "false") return "no";
  return std::nullopt;
}

/// Fixed option sets: yes/no (shuffled) for binary tasks; for mRS a window of
/// at most `mrs_cap` consecutive scores that always contains the truth, with
/// the window start drawn uniformly among valid starts, in ordinal order.
inline ChoiceSet outcome_choices(OutcomeTask task, const std::string& label, std::size_t mrs_cap,
                                 Rng& rng) {
  ChoiceSet cs;
  cs.provenance = ChoiceProvenance::FixedTemplate;
  if (task == OutcomeTask::Mrs3Month) {
    check_option_count(mrs_cap);
    const int t = std::stoi(label);
    const int cap = static_cast<int>(mrs_cap);
    const int first = std::max(0, t - cap + 1);
    const int last = std::min(t, kMrsClasses - cap);
    const int start = first + static_cast<int>(rng.index(static_cast<std::size_t>(last - first + 1)));
    for (int s = start; s < start + cap; ++s) {
      if (s == t) cs.answer_index = cs.options.size();
      cs.options.push_back(std::to_string(s));
    }
    return cs;
  }
  cs.options = {"yes", "no"};
  rng.shuffle(cs.options);
  cs.answer_index = cs.options[0] == label ? 0 : 1;
  return cs;
}

inline BuildResult finish_outcome_question(std::string patient_id, std::string context,
                                           OutcomeTask task, const Value& label,
                                           const TemplateSet& templates, std::uint64_t seed,
                                           std::size_t mrs_cap) {
  const auto norm = normalize_outcome_label(task, label);
  if (!norm) return BuildResult::skip(SkipReason::MissingLabel);
  const std::string tag = to_string(task);
  const std::uint64_t stream = derive_seed(seed, question_stream_key(patient_id, tag));
  Rng rng(stream);
  Question q;
  q.choices = outcome_choices(task, *norm, mrs_cap, rng);
  q.question_id = patient_id + ":" + tag;
  q.patient_id = std::move(patient_id);
  q.target = tag;
  q.kind = QuestionKind::OutcomePrediction;
  q.seed_trace = {seed, stream};
  q.prompt = template_for(templates, task).render({
      {"context", context},
      {"options", render_options(q.choices)},
      {"instruction", kAnswerInstruction},
  });
  BuildResult r;
  r.question = std::move(q);
  return r;
}

/// Outcome question from a static record whose label lives in `label_feature`.
/// The label feature and anything redundant with it are hidden.
inline BuildResult build_outcome_question(const PatientRecord& record, const Schema& schema,
                                          OutcomeTask task, FeatureId label_feature,
                                          const RedundancyFilter* filter,
                                          const TemplateSet& templates, std::uint64_t seed,
                                          std::size_t mrs_cap = 5) {
  std::vector<FeatureId> hidden = filter ? filter->excluded_for(label_feature) : std::vector<FeatureId>{};
  hidden.push_back(label_feature);
  std::sort(hidden.begin(), hidden.end());
  hidden.erase(std::unique(hidden.begin(), hidden.end()), hidden.end());
  auto r = finish_outcome_question(record.patient_id, render_record(record, schema, hidden), task,
                                   record.values.at(label_feature), templates, seed, mrs_cap);
  if (r.question) {
    r.question->excluded_features = hidden;
  }
  return r;
}

// Time series ----------------------------------------------------------------

/// Regularly sampled observations for one patient; rows align to the schema.
struct TimeSeriesEpisode {
  std::string patient_id;
  int interval_hours = 4;
  std::vector<int> hours;
  std::vector<std::vector<Value>> rows;
  std::map<std::string, std::string> outcome_labels;  // task tag -> label

  void validate() const {
    require(interval_hours > 0, "episode: interval_hours must be positive");
    require(hours.size() == rows.size(), "episode: hours/rows length mismatch");
    for (std::size_t i = 1; i < hours.size(); ++i) {
      if (hours[i] - hours[i - 1] != interval_hours) {
        throw DataError("episode '" + patient_id + "': timestamps must be spaced by " +
                        std::to_string(interval_hours) + "h");
      }
    }
  }
};

inline std::string render_timestep(const std::vector<Value>& row, int hour, const Schema& schema,
                                   std::optional<FeatureId> only_masked = std::nullopt) {
  std::string out = "[t = +" + std::to_string(hour) + "h]";
  for (const auto& f : schema.features) {
    if (only_masked) {
      if (f.id != *only_masked) continue;
      out += "\n" + f.label() + ": " + kMaskToken;
      continue;
    }
    const auto& v = row.at(f.id);
    if (is_missing(v)) continue;
    out += "\n" + f.label() + ": " + render_value(v, f);
  }
  return out;
}

inline std::string render_episode(const TimeSeriesEpisode& ep, const Schema& schema,
                                  std::size_t first_row, std::size_t end_row) {
  std::string out;
  for (std::size_t r = first_row; r < end_row; ++r) {
    if (!out.empty()) out += '\n';
    out += render_timestep(ep.rows[r], ep.hours[r], schema);
  }
  return out;
}

inline BuildResult build_outcome_question(const TimeSeriesEpisode& episode, const Schema& schema,
                                          OutcomeTask task, const TemplateSet& templates,
                                          std::uint64_t seed, std::size_t mrs_cap = 5) {
  episode.validate();
  const auto it = episode.outcome_labels.find(to_string(task));
  if (it == episode.outcome_labels.end()) return BuildResult::skip(SkipReason::MissingLabel);
  return finish_outcome_question(episode.patient_id,
                                 render_episode(episode, schema, 0, episode.rows.size()), task,
                                 Value(it->second), templates, seed, mrs_cap);
}

/// Value prediction at row `target_row` from the horizon_hours of rows before
/// it (horizon / interval rows). The final block shows only the masked target.
inline BuildResult build_timeseries_value_question(const TimeSeriesEpisode& episode,
                                                   const Schema& schema, FeatureId target,
                                                   std::size_t target_row, int horizon_hours,
                                                   const DistractorEngine& engine,
                                                   const TemplateSet& templates,
                                                   std::uint64_t seed) {
  episode.validate();
  require(horizon_hours > 0 && horizon_hours % episode.interval_hours == 0,
          "horizon must be a positive multiple of the sampling interval");
  require(target_row < episode.rows.size(), "target row out of range");
  const auto history = static_cast<std::size_t>(horizon_hours / episode.interval_hours);
  if (target_row < history) return BuildResult::skip(SkipReason::InsufficientHistory);
  const auto& truth = episode.rows[target_row].at(target);
  if (is_missing(truth)) return BuildResult::skip(SkipReason::MissingTarget);

  const auto& spec = schema[target];
  const std::string hour = std::to_string(episode.hours[target_row]);
  const std::uint64_t stream =
      derive_seed(seed, question_stream_key(episode.patient_id, spec.name + "@" + hour));
  Rng rng(stream);
  Question q;
  try {
    q.choices = engine.make_choices(target, truth, rng);
  } catch (const GenerationError& e) {
    return BuildResult::skip(SkipReason::GenerationFailed, e.what());
  } catch (const SchemaError& e) {
    return BuildResult::skip(SkipReason::GenerationFailed, e.what());
  }
  std::string context = render_episode(episode, schema, target_row - history, target_row);
  context += '\n';
  context += render_timestep(episode.rows[target_row], episode.hours[target_row], schema, target);

  q.question_id = episode.patient_id + ":" + std::to_string(target) + "@" + hour;
  q.patient_id = episode.patient_id;
  q.target = spec.name;
  q.target_id = target;
  q.kind = QuestionKind::TimeSeriesValue;
  q.seed_trace = {seed, stream};
  q.prompt = templates.timeseries_value.render({
      {"context", context},
      {"feature", spec.name},
      {"hour", hour},
      {"options", render_options(q.choices)},
      {"instruction", kAnswerInstruction},
  });
  BuildResult r;
  r.question = std::move(q);
  return r;
}

}  // namespace clinmcq
