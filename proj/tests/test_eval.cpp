#include <gtest/gtest.h>

#include <boost/math/distributions/binomial.hpp>
#include <sstream>

#include "clinmcq/eval/metrics.hpp"
#include "clinmcq/eval/review_server.hpp"
#include "clinmcq/infer/mock.hpp"

using namespace clinmcq;

namespace {

Question make_question(std::string id, std::string task, std::vector<std::string> options, std::size_t answer) {
  Question q;
  q.question_id = std::move(id);
  q.patient_id = "P" + q.question_id;
  q.target = std::move(task);
  q.prompt = "Context for " + q.question_id + "\nQ1. ?";
  q.choices.options = std::move(options);
  q.choices.answer_index = answer;
  return q;
}

Prediction predict(const std::string& id, std::optional<char> letter, std::string tag = "model-x") {
  Prediction p;
  p.question_id = id;
  p.model_tag = std::move(tag);
  p.extracted_letter = letter;
  p.final_letter = letter;
  p.reasoning = letter ? std::string("so \\boxed{") + *letter + "}" : "unsure";
  return p;
}

}  // namespace

TEST(ExtractAnswer, IdempotentAndWhitespaceInvariant) {
  Rng rng(1);
  const std::vector<std::string> pieces{"\\boxed{A}", "\\boxed{ C }", "answer is B", " text ", "\n", "\\boxed{E.}", "x"};
  for (int trial = 0; trial < 300; ++trial) {
    std::string s;
    for (std::size_t i = 0, n = rng.index(6); i < n; ++i) s += pieces[rng.index(pieces.size())];
    const auto a = extract_answer(s);
    EXPECT_EQ(extract_answer("  \n" + s + " \t\n"), a);
    if (a) EXPECT_EQ(extract_answer(std::string("\\boxed{") + *a + "}"), a);
  }
}

TEST(ForcedChoice, ArgmaxTiesAndLetters) {
  auto q = make_question("q1", "t", {"1", "2", "3", "4", "5"}, 0);
  q.assistant_prefix = kCotPrefix;
  const std::string reasoning = " some reasoning";
  const auto prompt = forced_choice_prompt(q, reasoning);
  EXPECT_EQ(prompt, q.prompt + "\n" + kCotPrefix + " some reasoning Therefore, the answer is");

  MockFixtures f;
  f.add_scores(prompt, {{" A", -0.3}, {" B", -1.2}, {" C", -4}, {" D", -5}, {" E", -6}});
  MockClient c(f);
  EXPECT_EQ(forced_choice(c, q, reasoning), 'A');

  f.add_scores(prompt, {{" A", -1.0}, {" B", -1.0}, {" C", -4}, {" D", -5}, {" E", -6}});
  MockClient tie(f);
  EXPECT_EQ(forced_choice(tie, q, reasoning), 'A');

  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    std::map<std::string, double> t;
    for (char l = 'A'; l <= 'E'; ++l) t[std::string(" ") + l] = -rng.uniform(0, 5);
    f.add_scores(prompt, t);
    MockClient m(f);
    const char got = forced_choice(m, q, reasoning);
    EXPECT_GE(got, 'A');
    EXPECT_LE(got, 'E');
    for (const auto& [k, v] : t) EXPECT_GE(t[std::string(" ") + got], v);
  }
}

TEST(RunInference, FallbacksAndOrdering) {
  std::vector<Question> qs;
  for (int i = 0; i < 6; ++i) qs.push_back(make_question("q" + std::to_string(i), "t", {"yes", "no"}, i % 2));
  MockFixtures f;
  f.supports_logprobs = false;
  const std::vector<std::string> answers{"\\boxed{A}", "\\boxed{A}", "the answer is B", "no idea", "\\boxed{E}",
                                         "\\boxed{B}"};
  for (int i = 0; i < 6; ++i) f.add_completion(reasoning_request(qs[i]), answers[i]);
  MockClient c(f);
  InferOptions opts;
  opts.model_tag = "mock";
  opts.max_in_flight = 3;
  const auto preds = run_inference(qs, c, opts);
  ASSERT_EQ(preds.size(), 6u);
  for (int i = 0; i < 6; ++i) EXPECT_EQ(preds[i].question_id, qs[i].question_id);
  EXPECT_EQ(preds[2].final_letter, 'B');
  EXPECT_EQ(preds[3].final_letter, std::nullopt);
  EXPECT_EQ(preds[4].extracted_letter, 'E');
  EXPECT_EQ(preds[4].final_letter, std::nullopt);  // E is not an option of a 2-option question

  QuestionFile file;
  file.questions = qs;
  const auto r = score_metrics(file, preds);
  // correct answers: q0 A, q1 B, q2 A, q3 B, q4 A, q5 B -> hits q0, q5
  EXPECT_EQ(r.n_correct, 2u);
  EXPECT_DOUBLE_EQ(r.accuracy, 2.0 / 6.0);

  std::stringstream io;
  write_predictions(io, preds);
  const auto back = read_predictions(io);
  ASSERT_EQ(back.size(), 6u);
  EXPECT_EQ(to_json(back[4]), to_json(preds[4]));
}

TEST(ScoreMetrics, AccuracyAndMacroF1) {
  QuestionFile f;
  std::vector<Prediction> p;
  for (int i = 0; i < 10; ++i) {
    f.questions.push_back(make_question("q" + std::to_string(i), "mortality", {"yes", "no"}, i < 7 ? 0 : 1));
    p.push_back(predict("q" + std::to_string(i), 'A'));
  }
  const auto r = score_metrics(f, p);
  ASSERT_EQ(r.rows.size(), 1u);
  EXPECT_DOUBLE_EQ(r.rows[0].accuracy, 0.7);
  // F1(yes) = 2*7/(14+3) , F1(no) = 0
  EXPECT_NEAR(r.rows[0].macro_f1, 0.5 * 14.0 / 17.0, 1e-12);

  p.push_back(predict("q3", 'B'));
  EXPECT_THROW(score_metrics(f, p), DataError);
  p.pop_back();
  p.push_back(predict("zzz", 'B'));
  EXPECT_THROW(score_metrics(f, p), DataError);
  p.pop_back();
  p.pop_back();
  EXPECT_THROW(score_metrics(f, p), DataError);
}

TEST(ScoreMetrics, MissingnessAccounting) {
  QuestionFile f;
  std::vector<Prediction> p;
  for (int i = 0; i < 890; ++i) {
    f.questions.push_back(make_question("q" + std::to_string(i), "Lactate", {"1.0", "1.5", "2.0"}, i % 3));
    p.push_back(predict("q" + std::to_string(i), option_letter(i % 2)));
  }
  f.accounting.push_back({"Lactate", 1000, 110, 0, 890});
  const auto r = score_metrics(f, p);
  ASSERT_EQ(r.rows.size(), 1u);
  EXPECT_EQ(r.rows[0].n_test, 1000u);
  EXPECT_EQ(r.rows[0].n_missing_skipped, 110u);
  EXPECT_EQ(r.rows[0].n_evaluated, 890u);
  f.accounting[0].n_test = 1001;
  EXPECT_THROW(score_metrics(f, p), DataError);
}

TEST(ScoreMetrics, ReportMatchesRecomputedCorrectness) {
  Rng rng(12);
  for (int trial = 0; trial < 30; ++trial) {
    QuestionFile f;
    std::vector<Prediction> p;
    const std::size_t n = 1 + rng.index(200);
    for (std::size_t i = 0; i < n; ++i) {
      const auto k = 2 + rng.index(4);
      std::vector<std::string> opts;
      for (std::size_t j = 0; j < k; ++j) opts.push_back(std::to_string(j));
      const auto id = "q" + std::to_string(i);
      f.questions.push_back(make_question(id, "task" + std::to_string(rng.index(3)), opts, rng.index(k)));
      p.push_back(predict(id, rng.bernoulli(0.1) ? std::nullopt : std::optional<char>(option_letter(rng.index(k)))));
    }
    const auto r = score_metrics(f, p);
    const auto scored = score_questions(f.questions, p);
    std::size_t hits = 0;
    for (const auto& s : scored) hits += s.correct;
    EXPECT_NEAR(r.accuracy, static_cast<double>(hits) / static_cast<double>(n), 1e-12);
    for (const auto& row : r.rows) {
      EXPECT_GE(row.accuracy, 0.0);
      EXPECT_LE(row.accuracy, 1.0);
      EXPECT_EQ(row.n_evaluated, row.n_test - row.n_missing_skipped - row.n_generation_failures);
    }
  }
}

TEST(ReportPerFeature, SortingTiesAndExclusions) {
  EvalReport r;
  r.rows = {{"Beta", 10, 0, 0, 10, 4, 0.4, 0.3},
            {"Alpha", 10, 0, 0, 10, 9, 0.9, 0.8},
            {"Gamma", 10, 0, 0, 10, 4, 0.4, 0.2},
            {"Empty", 5, 5, 0, 0, 0, 0.0, 0.0}};
  const auto ranked = report_per_feature(r);
  ASSERT_EQ(ranked.ranked.size(), 3u);
  EXPECT_EQ(ranked.ranked[0].task, "Alpha");
  EXPECT_EQ(ranked.ranked[1].task, "Beta");
  EXPECT_EQ(ranked.ranked[2].task, "Gamma");
  ASSERT_EQ(ranked.excluded.size(), 1u);
  std::ostringstream tsv;
  write_ranking_tsv(tsv, ranked);
  EXPECT_NE(tsv.str().find("1\tAlpha\t0.9000"), std::string::npos);
  EXPECT_NE(tsv.str().find("#\tEmpty\texcluded: n_evaluated = 0"), std::string::npos);
  const auto plot = ranking_plot_json(ranked);
  EXPECT_EQ(plot["x"], json({"Alpha", "Beta", "Gamma"}));
  EXPECT_EQ(eval_report_from_json(to_json(r)).rows.size(), 4u);
}

TEST(SignTest, ExamplesAgainstBoost) {
  const auto t = sign_test(36, 60);
  EXPECT_GE(t.one_sided_p, 0.077);
  EXPECT_LE(t.one_sided_p, 0.078);
  EXPECT_GE(t.two_sided_p, 0.155);
  EXPECT_LE(t.two_sided_p, 0.156);
  EXPECT_EQ(sign_test(10, 10).two_sided_p, std::ldexp(1.0, -9));
  EXPECT_EQ(sign_test(5, 10).two_sided_p, 1.0);

  for (std::size_t n = 1; n <= 120; n += 7) {
    const boost::math::binomial_distribution<double> b(static_cast<double>(n), 0.5);
    double prev = 2;
    for (std::size_t k = (n + 1) / 2; k <= n; ++k) {
      const auto s = sign_test(k, n);
      const double upper = k == 0 ? 1.0 : boost::math::cdf(boost::math::complement(b, static_cast<double>(k) - 1));
      EXPECT_NEAR(s.one_sided_p, upper, 1e-12 * std::max(1.0, upper) + 1e-15);
      EXPECT_EQ(s.two_sided_p, sign_test(n - k, n).two_sided_p);
      EXPECT_LE(s.two_sided_p, prev);
      prev = s.two_sided_p;
    }
  }
  EXPECT_THROW(sign_test(3, 2), InvalidArgument);
}

namespace {

struct ReviewFixture {
  std::vector<Question> qs;
  std::vector<Prediction> a, b;
  ReviewFixture() {
    for (int i = 0; i < 30; ++i) {
      const auto id = "q" + std::to_string(i);
      qs.push_back(make_question(id, "mortality", {"yes", "no"}, 0));
      auto pa = predict(id, 'A', "alpha-7b");
      pa.reasoning = "As alpha-7b I pick \\boxed{A}";
      a.push_back(pa);
      b.push_back(predict(id, 'B', "beta-70b"));
    }
  }
};

}  // namespace

TEST(ReviewBundle, BlindedDeterministicExport) {
  ReviewFixture fx;
  const auto b1 = export_review_bundle(fx.qs, fx.a, fx.b, 20, 5);
  const auto b2 = export_review_bundle(fx.qs, fx.a, fx.b, 20, 5);
  ASSERT_EQ(b1.items.size(), 20u);
  EXPECT_EQ(to_json(b1), to_json(b2));
  std::size_t a_left = 0;
  for (const auto& it : b1.items) {
    const auto payload = client_json(it).dump();
    EXPECT_EQ(payload.find("alpha-7b"), std::string::npos);
    EXPECT_EQ(payload.find("beta-70b"), std::string::npos);
    a_left += b1.blinding_key.at(it.item_id).left_model == "alpha-7b";
    EXPECT_EQ(it.gold, "A. yes");
  }
  EXPECT_GT(a_left, 0u);
  EXPECT_LT(a_left, 20u);
  EXPECT_THROW(export_review_bundle(fx.qs, fx.a, fx.b, 0, 5), InvalidArgument);
  EXPECT_THROW(export_review_bundle(fx.qs, fx.a, fx.b, 31, 5), DataError);
  const auto back = review_bundle_from_json(to_json(b1));
  EXPECT_EQ(to_json(back), to_json(b1));
}

TEST(ReviewBundle, WinRateUnblinds) {
  ReviewFixture fx;
  auto bundle = export_review_bundle(fx.qs, fx.a, fx.b, 20, 9);
  // Evaluator prefers alpha on the first 15 items.
  for (std::size_t i = 0; i < 20; ++i) {
    const auto& id = bundle.items[i].item_id;
    const bool want_alpha = i < 15;
    const bool alpha_left = bundle.blinding_key[id].left_model == "alpha-7b";
    bundle.annotations.push_back({id, "ev1", want_alpha == alpha_left ? Side::Left : Side::Right, ""});
  }
  const auto w = win_rate_test(bundle, "alpha-7b");
  EXPECT_EQ(w.n, 20u);
  EXPECT_EQ(w.wins.at("alpha-7b"), 15u);
  EXPECT_DOUBLE_EQ(w.win_rate.at("beta-70b"), 0.25);
  EXPECT_DOUBLE_EQ(w.one_sided_p, sign_test(15, 20).one_sided_p);
  bundle.annotations.push_back({"item-9999", "ev1", Side::Left, ""});
  EXPECT_THROW(win_rate_test(bundle), DataError);
  bundle.annotations.clear();
  EXPECT_THROW(win_rate_test(bundle), InvalidArgument);
}

TEST(ReviewServer, EndpointsProgressAndDuplicates) {
  ReviewFixture fx;
  ReviewStore store(export_review_bundle(fx.qs, fx.a, fx.b, 20, 2));
  ReviewServer server(store);
  const int port = server.start();
  httplib::Client cli("127.0.0.1", port);

  auto items = cli.Get("/items");
  ASSERT_TRUE(items);
  EXPECT_EQ(items->status, 200);
  EXPECT_EQ(items->body.find("alpha-7b"), std::string::npos);
  EXPECT_EQ(items->body.find("beta-70b"), std::string::npos);
  const auto list = json::parse(items->body);
  ASSERT_EQ(list["items"].size(), 20u);
  EXPECT_FALSE(list["items"][0].contains("blinding_key"));

  const std::string first = list["items"][0]["item_id"];
  auto one = cli.Get("/items/" + first);
  ASSERT_TRUE(one);
  EXPECT_EQ(json::parse(one->body)["item_id"], first);
  EXPECT_EQ(cli.Get("/items/nope")->status, 404);

  std::size_t left_votes = 0;
  for (std::size_t i = 0; i < 20; ++i) {
    const std::string id = list["items"][i]["item_id"];
    const std::string choice = i % 3 ? "left" : "right";
    left_votes += choice == "left";
    auto r = cli.Post("/annotations", json{{"item_id", id}, {"evaluator_id", "ev1"}, {"choice", choice}}.dump(),
                      "application/json");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 201);
  }
  auto dup = cli.Post("/annotations", json{{"item_id", first}, {"evaluator_id", "ev1"}, {"choice", "left"}}.dump(),
                      "application/json");
  EXPECT_EQ(dup->status, 409);
  EXPECT_EQ(cli.Post("/annotations", "{\"item_id\":\"x\"}", "application/json")->status, 400);
  EXPECT_EQ(cli.Post("/annotations", json{{"item_id", first}, {"evaluator_id", "ev2"}, {"choice", "up"}}.dump(),
                     "application/json")->status, 400);
  EXPECT_EQ(cli.Post("/annotations", json{{"item_id", "nope"}, {"evaluator_id", "ev2"}, {"choice", "left"}}.dump(),
                     "application/json")->status, 404);

  const auto prog = json::parse(cli.Get("/progress?evaluator_id=ev1")->body);
  EXPECT_EQ(prog["completed"], 20);
  EXPECT_EQ(prog["total"], 20);
  const auto all = json::parse(cli.Get("/progress")->body);
  EXPECT_EQ(all["annotations"], 20);
  const auto mine = json::parse(cli.Get("/items?evaluator_id=ev1")->body);
  EXPECT_TRUE(mine["items"][0]["annotated"].get<bool>());
  server.stop();

  const auto snap = store.snapshot();
  const auto w = win_rate_test(snap);
  EXPECT_EQ(w.n, 20u);
  std::size_t left_model_wins = 0;
  for (const auto& an : snap.annotations) left_model_wins += an.choice == Side::Left;
  EXPECT_EQ(left_model_wins, left_votes);
  std::size_t alpha = 0;
  for (const auto& an : snap.annotations) {
    const auto& key = snap.blinding_key.at(an.item_id);
    alpha += (an.choice == Side::Left ? key.left_model : key.right_model) == "alpha-7b";
  }
  EXPECT_EQ(w.wins.at("alpha-7b"), alpha);
}
