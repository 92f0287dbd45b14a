#include <gtest/gtest.h>

#include <atomic>
#include <sstream>
#include <thread>

#include "clinmcq/core/parallel.hpp"
#include "clinmcq/infer/mock.hpp"
#include "clinmcq/infer/openai.hpp"
#include "test_support.hpp"

using namespace clinmcq;
using clinmcq::testing::TempDir;
using clinmcq::testing::write_text;

namespace {

MockFixtures sample_fixtures() {
  MockFixtures f;
  f.name = "fx";
  CompletionRequest r;
  r.prompt = "What is 2+2?";
  f.add_completion(r, "4");
  r.assistant_prefix = "Let's think step by step.";
  f.add_completion(r, " Two and two make four. \\boxed{B}");
  f.add_scores("Q Therefore, the answer is", {{" A", -0.3}, {" B", -1.2}, {" C", -2.0}});
  return f;
}

/// Local completions endpoint. `script` returns (status, body) per call.
struct FakeEndpoint {
  httplib::Server svr;
  std::thread th;
  int port = 0;
  std::atomic<int> calls{0};
  std::function<std::pair<int, json>(const json&, int)> script;
  std::string last_auth;

  FakeEndpoint() {
    svr.Post("/v1/completions", [this](const httplib::Request& req, httplib::Response& res) {
      const int n = ++calls;
      last_auth = req.get_header_value("Authorization");
      const auto [status, body] = script(json::parse(req.body), n);
      res.status = status;
      res.set_content(body.dump(), "application/json");
    });
    port = svr.bind_to_any_port("127.0.0.1");
    th = std::thread([this] { svr.listen_after_bind(); });
    svr.wait_until_ready();
  }
  ~FakeEndpoint() {
    svr.stop();
    th.join();
  }
  EndpointConfig config() const {
    EndpointConfig c;
    c.endpoint_url = "http://127.0.0.1:" + std::to_string(port) + "/v1";
    c.model_name = "local-model";
    c.backoff_initial_s = 0.01;
    c.timeout_s = 5;
    return c;
  }
};

/// Echo response whose tokens are single characters, each with log-prob -0.5,
/// plus one generated token.
json echo_response(const std::string& prompt) {
  json tokens = json::array(), lps = json::array(), offs = json::array();
  for (std::size_t i = 0; i < prompt.size(); ++i) {
    tokens.push_back(prompt.substr(i, 1));
    lps.push_back(i == 0 ? json(nullptr) : json(-0.5));
    offs.push_back(i);
  }
  tokens.push_back("x");
  lps.push_back(-9.0);
  offs.push_back(prompt.size());
  return json{{"choices", {{{"text", prompt + "x"},
                            {"logprobs", {{"tokens", tokens}, {"token_logprobs", lps}, {"text_offset", offs}}}}}}};
}

}  // namespace

TEST(MockClient, CannedCompletionAndScores) {
  MockClient c(sample_fixtures());
  CompletionRequest r;
  r.prompt = "What is 2+2?";
  EXPECT_EQ(c.complete(r), "4");
  r.assistant_prefix = "Let's think step by step.";
  EXPECT_EQ(c.complete(r), " Two and two make four. \\boxed{B}");

  const auto s = c.score_continuations({"Q Therefore, the answer is", {" A", " B"}, 0});
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0].continuation, " A");
  EXPECT_DOUBLE_EQ(s[0].log_probability, -0.3);
  EXPECT_GT(s[0].log_probability, s[1].log_probability);
  EXPECT_EQ(c.score_continuations({"Q Therefore, the answer is", {" C"}, 0}).size(), 1u);
  const auto rev = c.score_continuations({"Q Therefore, the answer is", {" C", " B", " A"}, 0});
  EXPECT_DOUBLE_EQ(rev[0].log_probability, -2.0);
  EXPECT_DOUBLE_EQ(rev[2].log_probability, -0.3);
}

TEST(MockClient, FixtureMissIsExplicit) {
  MockClient c(sample_fixtures());
  CompletionRequest r;
  r.prompt = "unknown prompt";
  try {
    c.complete(r);
    FAIL();
  } catch (const FixtureMissError& e) {
    EXPECT_NE(std::string(e.what()).find(prompt_key("unknown prompt")), std::string::npos);
  }
  EXPECT_THROW(c.score_continuations({"nope", {" A"}, 0}), FixtureMissError);
  EXPECT_THROW(c.score_continuations({"Q Therefore, the answer is", {" E"}, 0}), FixtureMissError);
  EXPECT_THROW(c.score_continuations({"Q Therefore, the answer is", {}, 0}), InvalidArgument);
  auto f = sample_fixtures();
  f.supports_logprobs = false;
  EXPECT_THROW(MockClient(f).score_continuations({"Q Therefore, the answer is", {" A"}, 0}), CapabilityError);
}

TEST(MockClient, FixtureFileRoundTrip) {
  TempDir dir;
  const auto path = dir.path() / "fx.json";
  write_text(path.string(), to_json(sample_fixtures()).dump(2));
  MockClient c(load_mock_fixtures(path.string()));
  CompletionRequest r;
  r.prompt = "What is 2+2?";
  EXPECT_EQ(c.complete(r), "4");
  write_text(path.string(), "{\"format\": \"other\"}");
  EXPECT_THROW(load_mock_fixtures(path.string()), DataError);
}

TEST(Transcript, OrderedByIndexRegardlessOfScheduling) {
  auto run = [](unsigned jobs) {
    MockClient mock(sample_fixtures(), std::chrono::milliseconds(1));
    Transcript log;
    TranscriptClient c(mock, log);
    parallel_for(40, Executor{jobs}, [&](std::size_t i) {
      CompletionRequest r;
      r.prompt = "What is 2+2?";
      r.request_index = i;
      c.complete(r);
    });
    std::ostringstream out;
    log.write(out);
    return out.str();
  };
  const auto a = run(1);
  EXPECT_EQ(a, run(8));
  std::istringstream in(a);
  std::string line;
  std::size_t i = 0;
  while (std::getline(in, line)) {
    const auto j = json::parse(line);
    EXPECT_EQ(j["index"], i++);
    EXPECT_EQ(j["endpoint"], "mock:fx");
    EXPECT_EQ(j["request"]["prompt"], "What is 2+2?");
    EXPECT_EQ(j["response"], "4");
  }
  EXPECT_EQ(i, 40u);
}

TEST(BoundedClient, CapsConcurrency) {
  MockClient mock(sample_fixtures(), std::chrono::milliseconds(5));
  BoundedClient c(mock, 3);
  parallel_for(30, Executor{10}, [&](std::size_t) {
    CompletionRequest r;
    r.prompt = "What is 2+2?";
    c.complete(r);
  });
  EXPECT_LE(c.peak_in_flight(), 3u);
  EXPECT_GE(c.peak_in_flight(), 1u);
  EXPECT_THROW(BoundedClient(mock, 0), InvalidArgument);
}

TEST(OpenAiClient, CompletionWithAuthAndPrefix) {
  FakeEndpoint ep;
  json seen;
  ep.script = [&](const json& body, int) {
    seen = body;
    return std::pair{200, json{{"choices", {{{"text", " reasoning \\boxed{A}"}}}}}};
  };
  ::setenv("CLINMCQ_TEST_TOKEN", "secret", 1);
  auto cfg = ep.config();
  cfg.auth_token_env = "CLINMCQ_TEST_TOKEN";
  OpenAiClient c(cfg);
  CompletionRequest r;
  r.prompt = "P";
  r.assistant_prefix = "Let's think step by step.";
  r.max_tokens = 64;
  EXPECT_EQ(c.complete(r), " reasoning \\boxed{A}");
  EXPECT_EQ(seen["prompt"], "P\nLet's think step by step.");
  EXPECT_EQ(seen["model"], "local-model");
  EXPECT_EQ(seen["max_tokens"], 64);
  EXPECT_EQ(ep.last_auth, "Bearer secret");
}

TEST(OpenAiClient, RetriesAfterRateLimit) {
  FakeEndpoint ep;
  ep.script = [](const json&, int n) {
    if (n <= 2) return std::pair{429, json{{"error", "slow down"}}};
    return std::pair{200, json{{"choices", {{{"text", "ok"}}}}}};
  };
  OpenAiClient c(ep.config());
  CompletionRequest r;
  r.prompt = "P";
  EXPECT_EQ(c.complete(r), "ok");
  EXPECT_EQ(ep.calls.load(), 3);
}

TEST(OpenAiClient, ExhaustedRetriesAndBadResponses) {
  FakeEndpoint ep;
  ep.script = [](const json&, int) { return std::pair{503, json::object()}; };
  OpenAiClient c(ep.config());
  CompletionRequest r;
  r.prompt = "P";
  EXPECT_THROW(c.complete(r), TransportError);
  EXPECT_EQ(ep.calls.load(), 3);

  ep.script = [](const json&, int) { return std::pair{200, json{{"unexpected", 1}}}; };
  EXPECT_THROW(c.complete(r), ProtocolError);
  ep.script = [](const json&, int) { return std::pair{401, json{{"error", "no"}}}; };
  EXPECT_THROW(c.complete(r), ProtocolError);
}

TEST(OpenAiClient, UnreachableHostNamesEndpoint) {
  EndpointConfig cfg;
  cfg.endpoint_url = "http://127.0.0.1:1/v1";
  cfg.retries = 2;
  cfg.backoff_initial_s = 0.0;
  cfg.timeout_s = 2;
  OpenAiClient c(cfg);
  CompletionRequest r;
  r.prompt = "P";
  try {
    c.complete(r);
    FAIL();
  } catch (const TransportError& e) {
    EXPECT_NE(std::string(e.what()).find("http://127.0.0.1:1/v1"), std::string::npos);
  }
}

TEST(OpenAiClient, ContinuationScoresFromEcho) {
  FakeEndpoint ep;
  ep.script = [](const json& body, int) {
    EXPECT_EQ(body["echo"], true);
    return std::pair{200, echo_response(body["prompt"].get<std::string>())};
  };
  auto cfg = ep.config();
  OpenAiClient c(cfg);
  const auto s = c.score_continuations({"prompt is", {" A", " BCD"}, 0});
  ASSERT_EQ(s.size(), 2u);
  EXPECT_DOUBLE_EQ(s[0].log_probability, -1.0);  // two characters
  EXPECT_DOUBLE_EQ(s[1].log_probability, -2.0);
  cfg.per_token_mean = true;
  OpenAiClient mean(cfg);
  EXPECT_DOUBLE_EQ(mean.score_continuations({"prompt is", {" BCD"}, 0})[0].log_probability, -0.5);
}

TEST(OpenAiClient, MissingLogprobsIsCapabilityError) {
  FakeEndpoint ep;
  ep.script = [](const json&, int) { return std::pair{200, json{{"choices", {{{"text", "x"}, {"logprobs", nullptr}}}}}}; };
  OpenAiClient c(ep.config());
  EXPECT_THROW(c.score_continuations({"p", {" A"}, 0}), CapabilityError);
  ep.script = [](const json&, int) { return std::pair{400, json{{"error", "echo with logprobs unsupported"}}}; };
  EXPECT_THROW(c.score_continuations({"p", {" A"}, 0}), CapabilityError);
}
