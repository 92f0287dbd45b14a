#pragma once

#include <cctype>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "clinmcq/core/parallel.hpp"
#include "clinmcq/core/text.hpp"
#include "clinmcq/eval/extract.hpp"
#include "clinmcq/forge/question.hpp"
#include "clinmcq/infer/client.hpp"

namespace clinmcq {

inline constexpr const char* kForcedSuffix = " Therefore, the answer is";

struct Prediction {
  std::string question_id;
  std::string reasoning;
  std::optional<char> extracted_letter;
  std::optional<char> forced_letter;
  std::optional<char> final_letter;  // absent only when neither path gave a letter
  std::string model_tag;
};

inline CompletionRequest reasoning_request(const Question& q) {
  CompletionRequest r;
  r.prompt = q.prompt;
  r.assistant_prefix = q.assistant_prefix;
  return r;
}

/// Prompt + assistant prefix + reasoning + " Therefore, the answer is".
inline std::string forced_choice_prompt(const Question& q, const std::string& reasoning) {
  std::string text = completion_text(reasoning_request(q));
  if (!reasoning.empty() && !std::isspace(static_cast<unsigned char>(reasoning.front()))) text += ' ';
  text += reasoning;
  text += kForcedSuffix;
  return text;
}

/// Scores " A", " B", ... as continuations and returns the highest-scoring
/// letter; ties go to the earliest letter. CapabilityError propagates.
inline char forced_choice(Client& client, const Question& q, const std::string& reasoning,
                          std::size_t request_index = 0) {
  ScoreRequest req;
  req.prompt = forced_choice_prompt(q, reasoning);
  req.request_index = request_index;
  for (std::size_t i = 0; i < q.choices.size(); ++i) req.continuations.push_back(std::string(" ") + option_letter(i));
  const auto scores = client.score_continuations(req);
  if (scores.size() != req.continuations.size()) {
    throw ProtocolError("forced choice: expected " + std::to_string(req.continuations.size()) + " scores, got " +
                        std::to_string(scores.size()));
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i].log_probability > scores[best].log_probability) best = i;
  }
  return option_letter(best);
}

/// Letter used for scoring: the forced choice, else the extracted answer when
/// it names an existing option, else none (scored incorrect).
inline std::optional<char> final_letter(const Prediction& p, std::size_t n_options) {
  if (p.forced_letter) return p.forced_letter;
  if (p.extracted_letter) {
    const auto idx = letter_index(*p.extracted_letter);
    if (idx && *idx < n_options) return p.extracted_letter;
  }
  return std::nullopt;
}

struct InferOptions {
  std::string model_tag = "model";
  std::size_t max_tokens = 512;
  double temperature = 0.0;
  std::size_t max_in_flight = 8;
  bool forced = true;
};

/// Reasoning completion then forced choice for every question. Requests for
/// question i carry indexes 2i and 2i+1; predictions come back in question
/// order.
inline std::vector<Prediction> run_inference(const std::vector<Question>& questions, Client& client,
                                             const InferOptions& opts) {
  std::vector<Prediction> out(questions.size());
  parallel_for(questions.size(), Executor{static_cast<unsigned>(std::max<std::size_t>(1, opts.max_in_flight))},
               [&](std::size_t i) {
                 const auto& q = questions[i];
                 auto req = reasoning_request(q);
                 req.max_tokens = opts.max_tokens;
                 req.temperature = opts.temperature;
                 req.request_index = 2 * i;
                 Prediction p;
                 p.question_id = q.question_id;
                 p.model_tag = opts.model_tag;
                 p.reasoning = client.complete(req);
                 p.extracted_letter = extract_answer(p.reasoning);
                 if (opts.forced) {
                   try {
                     p.forced_letter = forced_choice(client, q, p.reasoning, 2 * i + 1);
                   } catch (const CapabilityError&) {
                   }
                 }
                 p.final_letter = final_letter(p, q.choices.size());
                 out[i] = std::move(p);
               });
  return out;
}

inline json letter_json(const std::optional<char>& c) { return c ? json(std::string(1, *c)) : json(nullptr); }

inline std::optional<char> letter_from_json(const json& j) {
  if (j.is_null()) return std::nullopt;
  const auto s = j.get<std::string>();
  if (s.size() != 1 || !letter_index(s[0])) throw DataError("invalid option letter '" + s + "'");
  return s[0];
}

inline json to_json(const Prediction& p) {
  return json{{"question_id", p.question_id},
              {"model_tag", p.model_tag},
              {"reasoning", p.reasoning},
              {"extracted_letter", letter_json(p.extracted_letter)},
              {"forced_letter", letter_json(p.forced_letter)},
              {"final_letter", letter_json(p.final_letter)}};
}

inline Prediction prediction_from_json(const json& j) {
  Prediction p;
  try {
    p.question_id = j.at("question_id").get<std::string>();
    p.model_tag = j.value("model_tag", std::string());
    p.reasoning = j.value("reasoning", std::string());
    p.extracted_letter = letter_from_json(j.value("extracted_letter", json(nullptr)));
    p.forced_letter = letter_from_json(j.value("forced_letter", json(nullptr)));
    p.final_letter = letter_from_json(j.value("final_letter", json(nullptr)));
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed prediction: ") + e.what());
  }
  return p;
}

inline void write_predictions(std::ostream& out, const std::vector<Prediction>& preds) {
  for (const auto& p : preds) out << to_json(p).dump() << '\n';
}

inline std::vector<Prediction> read_predictions(std::istream& in) {
  std::vector<Prediction> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      out.push_back(prediction_from_json(json::parse(line)));
    } catch (const json::parse_error& e) {
      throw DataError("predictions line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline std::vector<Prediction> read_prediction_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open predictions file " + path);
  return read_predictions(in);
}

}  // namespace clinmcq
