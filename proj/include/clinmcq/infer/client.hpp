#pragma once

#include <algorithm>
#include <condition_variable>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "clinmcq/core/error.hpp"
#include "clinmcq/core/hash.hpp"
#include "clinmcq/ingest/schema.hpp"

namespace clinmcq {

struct CompletionRequest {
  std::string prompt;
  std::optional<std::string> assistant_prefix;
  std::size_t max_tokens = 512;
  double temperature = 0.0;
  std::vector<std::string> stop;
  std::size_t request_index = 0;  // position in the caller's request stream

  void validate() const {
    require(max_tokens >= 1, "completion request: max_tokens must be >= 1");
    require(temperature >= 0, "completion request: temperature must be >= 0");
  }
};

struct ScoreRequest {
  std::string prompt;
  std::vector<std::string> continuations;
  std::size_t request_index = 0;

  void validate() const {
    require(!continuations.empty(), "score request: continuations must be non-empty");
  }
};

struct ContinuationScore {
  std::string continuation;
  double log_probability = 0;
};

/// Text sent to a completion-mode endpoint: the prompt, then the assistant
/// prefix on its own line so generation continues after it.
inline std::string completion_text(const CompletionRequest& r) {
  if (!r.assistant_prefix) return r.prompt;
  return r.prompt + "\n" + *r.assistant_prefix;
}

/// Fixture key for a prompt.
inline std::string prompt_key(const std::string& text) { return hash_hex(text); }

class Client {
 public:
  virtual ~Client() = default;
  virtual std::string complete(const CompletionRequest& req) = 0;
  /// One score per continuation, in request order. CapabilityError when the
  /// endpoint cannot report log-probabilities.
  virtual std::vector<ContinuationScore> score_continuations(const ScoreRequest& req) = 0;
  virtual std::string endpoint_id() const = 0;
};

// Transcript -------------------------------------------------------------------

inline json to_json(const CompletionRequest& r) {
  return json{{"prompt", r.prompt},
              {"assistant_prefix", r.assistant_prefix ? json(*r.assistant_prefix) : json(nullptr)},
              {"max_tokens", r.max_tokens},
              {"temperature", r.temperature},
              {"stop", r.stop}};
}

/// Request/response log. Entries are buffered and written ordered by request
/// index, so the file does not depend on scheduling.
class Transcript {
 public:
  void add(std::size_t index, json entry) {
    entry["index"] = index;
    std::lock_guard lock(mu_);
    entries_.emplace(index, std::move(entry));
  }

  void write(std::ostream& out) const {
    std::lock_guard lock(mu_);
    for (const auto& [i, e] : entries_) out << e.dump() << '\n';
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return entries_.size();
  }

 private:
  mutable std::mutex mu_;
  std::multimap<std::size_t, json> entries_;
};

/// Logs every request and its outcome, then forwards to `inner`.
class TranscriptClient : public Client {
 public:
  TranscriptClient(Client& inner, Transcript& log) : inner_(inner), log_(log) {}

  std::string complete(const CompletionRequest& req) override {
    json e{{"endpoint", inner_.endpoint_id()}, {"kind", "complete"}, {"request", to_json(req)}};
    try {
      auto text = inner_.complete(req);
      e["response"] = text;
      log_.add(req.request_index, std::move(e));
      return text;
    } catch (const Error& err) {
      e["error"] = {{"kind", err.kind()}, {"message", err.what()}};
      log_.add(req.request_index, std::move(e));
      throw;
    }
  }

  std::vector<ContinuationScore> score_continuations(const ScoreRequest& req) override {
    json e{{"endpoint", inner_.endpoint_id()},
           {"kind", "score"},
           {"request", {{"prompt", req.prompt}, {"continuations", req.continuations}}}};
    try {
      auto scores = inner_.score_continuations(req);
      json arr = json::array();
      for (const auto& s : scores) arr.push_back({{"continuation", s.continuation}, {"log_probability", s.log_probability}});
      e["response"] = arr;
      log_.add(req.request_index, std::move(e));
      return scores;
    } catch (const Error& err) {
      e["error"] = {{"kind", err.kind()}, {"message", err.what()}};
      log_.add(req.request_index, std::move(e));
      throw;
    }
  }

  std::string endpoint_id() const override { return inner_.endpoint_id(); }

 private:
  Client& inner_;
  Transcript& log_;
};

/// Caps the number of requests in flight through `inner`.
class BoundedClient : public Client {
 public:
  BoundedClient(Client& inner, std::size_t max_in_flight) : inner_(inner), limit_(max_in_flight) {
    require(max_in_flight >= 1, "max_in_flight must be >= 1");
  }

  std::string complete(const CompletionRequest& req) override {
    Slot s(*this);
    return inner_.complete(req);
  }
  std::vector<ContinuationScore> score_continuations(const ScoreRequest& req) override {
    Slot s(*this);
    return inner_.score_continuations(req);
  }
  std::string endpoint_id() const override { return inner_.endpoint_id(); }

  std::size_t peak_in_flight() const {
    std::lock_guard lock(mu_);
    return peak_;
  }

 private:
  struct Slot {
    explicit Slot(BoundedClient& c) : c_(c) {
      std::unique_lock lock(c_.mu_);
      c_.cv_.wait(lock, [&] { return c_.in_flight_ < c_.limit_; });
      c_.peak_ = std::max(c_.peak_, ++c_.in_flight_);
    }
    ~Slot() {
      {
        std::lock_guard lock(c_.mu_);
        --c_.in_flight_;
      }
      c_.cv_.notify_one();
    }
    BoundedClient& c_;
  };

  Client& inner_;
  std::size_t limit_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::size_t in_flight_ = 0;
  std::size_t peak_ = 0;
};

}  // namespace clinmcq
