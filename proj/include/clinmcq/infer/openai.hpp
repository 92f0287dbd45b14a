#pragma once

#include <chrono>
#include <cstdlib>
#include <string>
#include <thread>

#include <httplib.h>

#include "clinmcq/infer/client.hpp"

namespace clinmcq {

struct EndpointConfig {
  std::string endpoint_url;  // e.g. http://localhost:8000/v1
  std::string auth_token_env = "CLINMCQ_API_TOKEN";
  std::string model_name;
  std::size_t max_in_flight = 8;
  double timeout_s = 60;
  std::size_t retries = 3;  // total attempts
  double backoff_initial_s = 0.5;
  bool per_token_mean = false;

  void validate() const {
    require(!endpoint_url.empty(), "endpoint: endpoint_url is required");
    require(max_in_flight >= 1, "endpoint: max_in_flight must be >= 1");
    require(timeout_s > 0, "endpoint: timeout_s must be positive");
    require(retries >= 1, "endpoint: retries must be >= 1");
    require(backoff_initial_s >= 0, "endpoint: backoff_initial_s must be >= 0");
  }
};

inline json to_json(const EndpointConfig& c) {
  return json{{"endpoint_url", c.endpoint_url},     {"auth_token_env", c.auth_token_env},
              {"model_name", c.model_name},         {"max_in_flight", c.max_in_flight},
              {"timeout_s", c.timeout_s},           {"retries", c.retries},
              {"backoff_initial_s", c.backoff_initial_s}, {"per_token_mean", c.per_token_mean}};
}

inline EndpointConfig endpoint_from_json(const json& j) {
  EndpointConfig c;
  c.endpoint_url = j.value("endpoint_url", c.endpoint_url);
  c.auth_token_env = j.value("auth_token_env", c.auth_token_env);
  c.model_name = j.value("model_name", c.model_name);
  c.max_in_flight = j.value("max_in_flight", c.max_in_flight);
  c.timeout_s = j.value("timeout_s", c.timeout_s);
  c.retries = j.value("retries", c.retries);
  c.backoff_initial_s = j.value("backoff_initial_s", c.backoff_initial_s);
  c.per_token_mean = j.value("per_token_mean", c.per_token_mean);
  return c;
}

/// Client for the common /completions endpoint shape. Continuation scores use
/// echo + logprobs: the prompt and continuation are sent together and the
/// log-probabilities of the continuation's tokens are summed (or averaged when
/// per_token_mean is set).
class OpenAiClient : public Client {
 public:
  explicit OpenAiClient(EndpointConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    const auto scheme = cfg_.endpoint_url.find("://");
    if (scheme == std::string::npos) throw InvalidArgument("endpoint_url needs a scheme: " + cfg_.endpoint_url);
    const auto slash = cfg_.endpoint_url.find('/', scheme + 3);
    host_ = cfg_.endpoint_url.substr(0, slash);
    if (slash != std::string::npos) prefix_ = cfg_.endpoint_url.substr(slash);
    while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
    if (const char* tok = std::getenv(cfg_.auth_token_env.c_str())) token_ = tok;
  }

  std::string complete(const CompletionRequest& req) override {
    req.validate();
    json body{{"model", cfg_.model_name},
              {"prompt", completion_text(req)},
              {"max_tokens", req.max_tokens},
              {"temperature", req.temperature}};
    if (!req.stop.empty()) body["stop"] = req.stop;
    const json resp = post(body);
    try {
      return resp.at("choices").at(0).at("text").get<std::string>();
    } catch (const json::exception&) {
      throw ProtocolError(endpoint_id() + ": completion response lacks choices[0].text");
    }
  }

  std::vector<ContinuationScore> score_continuations(const ScoreRequest& req) override {
    req.validate();
    std::vector<ContinuationScore> out;
    for (const auto& cont : req.continuations) {
      const std::string full = req.prompt + cont;
      json body{{"model", cfg_.model_name}, {"prompt", full}, {"max_tokens", 1},
                {"temperature", 0.0},       {"echo", true},   {"logprobs", 1}};
      const json resp = post(body);
      out.push_back({cont, continuation_logprob(resp, req.prompt.size(), full.size())});
    }
    return out;
  }

  std::string endpoint_id() const override { return cfg_.endpoint_url + "#" + cfg_.model_name; }

 private:
  double continuation_logprob(const json& resp, std::size_t begin, std::size_t end) const {
    const json* lp = nullptr;
    try {
      lp = &resp.at("choices").at(0).at("logprobs");
    } catch (const json::exception&) {
      throw CapabilityError(endpoint_id() + " returned no log-probabilities");
    }
    if (lp->is_null() || !lp->contains("token_logprobs") || !lp->contains("text_offset")) {
      throw CapabilityError(endpoint_id() + " returned no log-probabilities");
    }
    const auto& values = (*lp)["token_logprobs"];
    const auto& offsets = (*lp)["text_offset"];
    if (!values.is_array() || !offsets.is_array() || values.size() != offsets.size()) {
      throw ProtocolError(endpoint_id() + ": malformed logprobs block");
    }
    double sum = 0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const auto off = offsets[i].get<std::size_t>();
      if (off < begin || off >= end) continue;
      if (!values[i].is_number()) throw ProtocolError(endpoint_id() + ": null log-probability in continuation");
      sum += values[i].get<double>();
      ++n;
    }
    if (n == 0) throw ProtocolError(endpoint_id() + ": no tokens cover the continuation");
    return cfg_.per_token_mean ? sum / static_cast<double>(n) : sum;
  }

  json post(const json& body) const {
    const std::string path = prefix_ + "/completions";
    std::string last_error;
    for (std::size_t attempt = 0; attempt < cfg_.retries; ++attempt) {
      if (attempt > 0) {
        const double wait = cfg_.backoff_initial_s * static_cast<double>(1u << std::min<std::size_t>(attempt - 1, 10));
        std::this_thread::sleep_for(std::chrono::duration<double>(wait));
      }
      httplib::Client cli(host_);
      const auto t = std::chrono::duration<double>(cfg_.timeout_s);
      cli.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(t));
      cli.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(t));
      cli.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(t));
      if (!token_.empty()) cli.set_bearer_token_auth(token_);
      const auto res = cli.Post(path, body.dump(), "application/json");
      if (!res) {
        last_error = httplib::to_string(res.error());
        continue;
      }
      if (res->status == 429 || res->status >= 500) {
        last_error = "HTTP " + std::to_string(res->status);
        continue;
      }
      if (res->status != 200) {
        const std::string excerpt = res->body.substr(0, 300);
        if (res->status == 400 && (excerpt.find("logprobs") != std::string::npos ||
                                   excerpt.find("echo") != std::string::npos)) {
          throw CapabilityError(endpoint_id() + " rejected log-probability request: " + excerpt);
        }
        throw ProtocolError(endpoint_id() + ": HTTP " + std::to_string(res->status) + ": " + excerpt);
      }
      try {
        return json::parse(res->body);
      } catch (const json::parse_error&) {
        throw ProtocolError(endpoint_id() + ": response is not JSON");
      }
    }
    throw TransportError("endpoint " + cfg_.endpoint_url + " failed after " + std::to_string(cfg_.retries) +
                         " attempts: " + last_error);
  }

  EndpointConfig cfg_;
  std::string host_;
  std::string prefix_;
  std::string token_;
};

}  // namespace clinmcq
