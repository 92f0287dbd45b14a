#pragma once

#include <chrono>
#include <ctime>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "clinmcq/core/rng.hpp"
#include "clinmcq/eval/predict.hpp"
#include "clinmcq/eval/signtest.hpp"
#include "clinmcq/forge/question.hpp"

namespace clinmcq {

struct ReviewItem {
  std::string item_id;
  std::string task;
  std::string context;
  std::string gold;
  std::string left;
  std::string right;
  std::optional<std::string> summary;
};

struct BlindingEntry {
  std::string left_model;
  std::string right_model;
};

enum class Side { Left, Right };

inline const char* to_string(Side s) { return s == Side::Left ? "left" : "right"; }

inline Side parse_side(const std::string& s) {
  if (s == "left") return Side::Left;
  if (s == "right") return Side::Right;
  throw InvalidArgument("choice must be 'left' or 'right', got '" + s + "'");
}

struct Annotation {
  std::string item_id;
  std::string evaluator_id;
  Side choice = Side::Left;
  std::string timestamp;
};

struct ReviewBundle {
  std::vector<ReviewItem> items;
  std::map<std::string, BlindingEntry> blinding_key;  // server side only
  std::vector<Annotation> annotations;

  const ReviewItem* find(const std::string& id) const {
    for (const auto& it : items) {
      if (it.item_id == id) return &it;
    }
    return nullptr;
  }
};

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

namespace detail {

inline std::string redact(std::string text, const std::vector<std::string>& tags) {
  for (const auto& t : tags) {
    if (t.empty()) continue;
    for (auto p = text.find(t); p != std::string::npos; p = text.find(t, p + 7)) text.replace(p, t.size(), "[model]");
  }
  return text;
}

inline std::string single_tag(const std::vector<Prediction>& preds, const char* which) {
  std::set<std::string> tags;
  for (const auto& p : preds) tags.insert(p.model_tag);
  if (tags.size() != 1 || tags.begin()->empty()) {
    throw DataError(std::string(which) + " predictions must carry exactly one non-empty model_tag");
  }
  return *tags.begin();
}

}  // namespace detail

/// Samples `n_items` questions answered by both models and pairs their
/// reasoning in a per-item random left/right order. Model tags are redacted
/// from every client-visible text.
inline ReviewBundle export_review_bundle(const std::vector<Question>& questions,
                                         const std::vector<Prediction>& model_a,
                                         const std::vector<Prediction>& model_b, std::size_t n_items,
                                         std::uint64_t seed,
                                         const std::map<std::string, std::string>& summaries = {}) {
  if (n_items == 0) throw InvalidArgument("review bundle: n_items must be >= 1");
  const auto tag_a = detail::single_tag(model_a, "model A");
  const auto tag_b = detail::single_tag(model_b, "model B");
  if (tag_a == tag_b) throw DataError("review bundle: both prediction sets carry model_tag '" + tag_a + "'");
  std::map<std::string, const Prediction*> a, b;
  for (const auto& p : model_a) a[p.question_id] = &p;
  for (const auto& p : model_b) b[p.question_id] = &p;
  std::vector<const Question*> pool;
  for (const auto& q : questions) {
    if (a.count(q.question_id) && b.count(q.question_id)) pool.push_back(&q);
  }
  if (pool.size() < n_items) {
    throw DataError("review bundle: " + std::to_string(n_items) + " items requested but only " +
                    std::to_string(pool.size()) + " questions are answered by both models (" +
                    std::to_string(model_a.size()) + " A, " + std::to_string(model_b.size()) + " B)");
  }
  Rng pick(derive_seed(seed, "review/sample"));
  pick.shuffle(pool);
  pool.resize(n_items);

  const std::vector<std::string> tags{tag_a, tag_b};
  ReviewBundle bundle;
  for (std::size_t i = 0; i < n_items; ++i) {
    const auto& q = *pool[i];
    Rng side(derive_seed(seed, "review/side", i));
    const bool a_left = side.bernoulli(0.5);
    ReviewItem item;
    char id[32];
    std::snprintf(id, sizeof id, "item-%04zu", i + 1);
    item.item_id = id;
    item.task = detail::redact(q.target, tags);
    item.context = detail::redact(q.prompt, tags);
    item.gold = std::string(1, option_letter(q.choices.answer_index)) + ". " + detail::redact(q.choices.answer_text(), tags);
    const auto& ra = detail::redact(a[q.question_id]->reasoning, tags);
    const auto& rb = detail::redact(b[q.question_id]->reasoning, tags);
    item.left = a_left ? ra : rb;
    item.right = a_left ? rb : ra;
    if (const auto s = summaries.find(q.question_id); s != summaries.end()) item.summary = detail::redact(s->second, tags);
    bundle.blinding_key[item.item_id] = a_left ? BlindingEntry{tag_a, tag_b} : BlindingEntry{tag_b, tag_a};
    bundle.items.push_back(std::move(item));
  }
  return bundle;
}

inline json client_json(const ReviewItem& it) {
  json j{{"item_id", it.item_id}, {"task", it.task},  {"context", it.context},
         {"gold", it.gold},       {"left", it.left}, {"right", it.right}};
  j["summary"] = it.summary ? json(*it.summary) : json(nullptr);
  return j;
}

inline json to_json(const Annotation& a) {
  return json{{"item_id", a.item_id},
              {"evaluator_id", a.evaluator_id},
              {"choice", to_string(a.choice)},
              {"timestamp", a.timestamp}};
}

inline Annotation annotation_from_json(const json& j) {
  Annotation a;
  try {
    a.item_id = j.at("item_id").get<std::string>();
    a.evaluator_id = j.at("evaluator_id").get<std::string>();
    a.choice = parse_side(j.at("choice").get<std::string>());
    a.timestamp = j.value("timestamp", std::string());
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("annotation: ") + e.what());
  }
  if (a.item_id.empty() || a.evaluator_id.empty()) throw InvalidArgument("annotation: item_id and evaluator_id are required");
  return a;
}

/// Server-side file: items, blinding key, annotations.
inline json to_json(const ReviewBundle& b) {
  json items = json::array(), key = json::object(), ann = json::array();
  for (const auto& it : b.items) items.push_back(client_json(it));
  for (const auto& [id, e] : b.blinding_key) key[id] = {{"left", e.left_model}, {"right", e.right_model}};
  for (const auto& a : b.annotations) ann.push_back(to_json(a));
  return json{{"format", "clinmcq.review_bundle"}, {"items", items}, {"blinding_key", key}, {"annotations", ann}};
}

inline ReviewBundle review_bundle_from_json(const json& j) {
  ReviewBundle b;
  try {
    if (j.value("format", std::string()) != "clinmcq.review_bundle") throw DataError("expected format clinmcq.review_bundle");
    for (const auto& it : j.at("items")) {
      ReviewItem r;
      r.item_id = it.at("item_id").get<std::string>();
      r.task = it.value("task", std::string());
      r.context = it.at("context").get<std::string>();
      r.gold = it.at("gold").get<std::string>();
      r.left = it.at("left").get<std::string>();
      r.right = it.at("right").get<std::string>();
      if (it.contains("summary") && !it["summary"].is_null()) r.summary = it["summary"].get<std::string>();
      b.items.push_back(std::move(r));
    }
    for (const auto& [id, e] : j.at("blinding_key").items()) {
      b.blinding_key[id] = {e.at("left").get<std::string>(), e.at("right").get<std::string>()};
    }
    for (const auto& a : j.value("annotations", json::array())) b.annotations.push_back(annotation_from_json(a));
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed review bundle: ") + e.what());
  }
  for (const auto& it : b.items) {
    if (!b.blinding_key.count(it.item_id)) throw DataError("review bundle: no blinding entry for " + it.item_id);
  }
  return b;
}

struct WinRate {
  std::map<std::string, double> win_rate;
  std::map<std::string, std::size_t> wins;
  std::size_t n = 0;
  std::string reference_model;  // the model whose wins are tested
  double one_sided_p = 1;
  double two_sided_p = 1;
};

/// Unblinds every annotation, counts wins per model and runs the exact sign
/// test on `reference_model`'s wins (default: first model in sorted order).
inline WinRate win_rate_test(const ReviewBundle& b, std::string reference_model = {}) {
  if (b.annotations.empty()) throw InvalidArgument("win rate: no annotations");
  WinRate w;
  for (const auto& [id, e] : b.blinding_key) {
    w.wins.emplace(e.left_model, 0);
    w.wins.emplace(e.right_model, 0);
  }
  for (const auto& a : b.annotations) {
    const auto it = b.blinding_key.find(a.item_id);
    if (it == b.blinding_key.end()) throw DataError("annotation references unknown item '" + a.item_id + "'");
    ++w.wins[a.choice == Side::Left ? it->second.left_model : it->second.right_model];
    ++w.n;
  }
  if (w.wins.size() != 2) throw DataError("win rate: bundle must compare exactly two models");
  if (reference_model.empty()) reference_model = w.wins.begin()->first;
  if (!w.wins.count(reference_model)) throw InvalidArgument("win rate: unknown model '" + reference_model + "'");
  for (const auto& [m, k] : w.wins) w.win_rate[m] = static_cast<double>(k) / static_cast<double>(w.n);
  const auto t = sign_test(w.wins[reference_model], w.n);
  w.reference_model = reference_model;
  w.one_sided_p = t.one_sided_p;
  w.two_sided_p = t.two_sided_p;
  return w;
}

inline json to_json(const WinRate& w) {
  return json{{"n", w.n},
              {"wins", w.wins},
              {"win_rate", w.win_rate},
              {"reference_model", w.reference_model},
              {"one_sided_p", w.one_sided_p},
              {"two_sided_p", w.two_sided_p}};
}

}  // namespace clinmcq
