#pragma once

#include <chrono>
#include <map>
#include <string>
#include <thread>

#include "clinmcq/infer/client.hpp"
#include "clinmcq/ingest/csv.hpp"

namespace clinmcq {

/// Canned responses keyed by prompt_key() of the exact text sent:
/// completion_text(request) for completions, the scoring prompt for scores.
///
///   {"format": "clinmcq.mock_fixtures", "supports_logprobs": true,
///    "completions": {"<key>": "text"},
///    "scores": {"<key>": {" A": -0.3, " B": -1.2}}}
struct MockFixtures {
  std::string name = "mock";
  bool supports_logprobs = true;
  std::map<std::string, std::string> completions;
  std::map<std::string, std::map<std::string, double>> scores;

  void add_completion(const CompletionRequest& r, std::string text) {
    completions[prompt_key(completion_text(r))] = std::move(text);
  }
  void add_scores(const std::string& prompt, std::map<std::string, double> table) {
    scores[prompt_key(prompt)] = std::move(table);
  }
};

inline json to_json(const MockFixtures& f) {
  return json{{"format", "clinmcq.mock_fixtures"},
              {"name", f.name},
              {"supports_logprobs", f.supports_logprobs},
              {"completions", f.completions},
              {"scores", f.scores}};
}

inline MockFixtures mock_fixtures_from_json(const json& j) {
  MockFixtures f;
  try {
    if (j.value("format", std::string()) != "clinmcq.mock_fixtures") {
      throw DataError("mock fixtures: expected format clinmcq.mock_fixtures");
    }
    f.name = j.value("name", std::string("mock"));
    f.supports_logprobs = j.value("supports_logprobs", true);
    if (j.contains("completions")) f.completions = j["completions"].get<std::map<std::string, std::string>>();
    if (j.contains("scores")) f.scores = j["scores"].get<std::map<std::string, std::map<std::string, double>>>();
  } catch (const json::exception& e) {
    throw DataError(std::string("mock fixtures: ") + e.what());
  }
  return f;
}

inline MockFixtures load_mock_fixtures(const std::string& path) {
  try {
    return mock_fixtures_from_json(json::parse(csv::read_file(path)));
  } catch (const json::parse_error& e) {
    throw DataError("mock fixtures " + path + ": " + e.what());
  }
}

/// Offline client answering from fixtures. A prompt without a fixture is a
/// FixtureMissError naming its key; nothing is ever made up.
class MockClient : public Client {
 public:
  explicit MockClient(MockFixtures fixtures, std::chrono::milliseconds latency = {})
      : f_(std::move(fixtures)), latency_(latency) {}

  std::string complete(const CompletionRequest& req) override {
    req.validate();
    delay();
    const auto key = prompt_key(completion_text(req));
    const auto it = f_.completions.find(key);
    if (it == f_.completions.end()) throw FixtureMissError("no completion fixture for prompt hash " + key);
    return it->second;
  }

  std::vector<ContinuationScore> score_continuations(const ScoreRequest& req) override {
    req.validate();
    if (!f_.supports_logprobs) throw CapabilityError(endpoint_id() + " does not report log-probabilities");
    delay();
    const auto key = prompt_key(req.prompt);
    const auto it = f_.scores.find(key);
    if (it == f_.scores.end()) throw FixtureMissError("no score fixture for prompt hash " + key);
    std::vector<ContinuationScore> out;
    for (const auto& c : req.continuations) {
      const auto s = it->second.find(c);
      if (s == it->second.end()) {
        throw FixtureMissError("score fixture " + key + " lacks continuation '" + c + "'");
      }
      out.push_back({c, s->second});
    }
    return out;
  }

  std::string endpoint_id() const override { return "mock:" + f_.name; }

 private:
  void delay() const {
    if (latency_.count() > 0) std::this_thread::sleep_for(latency_);
  }

  MockFixtures f_;
  std::chrono::milliseconds latency_;
};

}  // namespace clinmcq
