#include <gtest/gtest.h>

#include <sstream>

#include "clinmcq/grpo/trainer.hpp"
#include "clinmcq/grpo/fixture.hpp"

using namespace clinmcq;

namespace {

Cues random_cues(Rng& rng, std::size_t n) {
  Cues c;
  c.n_options = n;
  c.x.resize(n * Cues::kDim);
  for (auto& v : c.x) v = rng.normal();
  return c;
}

ToyPolicy random_policy(Rng& rng, double scale = 0.5) {
  ToyPolicy p;
  for (auto& t : p.theta) t = rng.normal(0, scale);
  return p;
}

RolloutGroup random_group(Rng& rng, const ToyPolicy& near, std::size_t g, std::size_t n_options) {
  RolloutGroup grp;
  grp.question_id = "q";
  grp.cues = random_cues(rng, n_options);
  const auto probs = near.probabilities(grp.cues);
  for (std::size_t k = 0; k < g; ++k) {
    const auto a = rng.index(n_options);
    grp.answer_letters.push_back(option_letter(a));
    grp.completions.push_back(toy_completion(option_letter(a)));
    grp.rewards.push_back(rng.bernoulli(0.4) ? 1.0 : 0.0);
    // Perturbed rollout probabilities put some ratios outside the clip range.
    grp.old_log_probs.push_back(std::min(-1e-9, std::log(probs[a]) + rng.normal(0, 0.3)));
  }
  grp.advantages = group_advantages(grp.rewards);
  return grp;
}

double norm(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

TEST(Extract, BoxedAndFallback) {
  EXPECT_EQ(extract_answer("Thus, the masked value is: \\boxed{A}"), 'A');
  EXPECT_EQ(extract_answer("I think \\boxed{B} but on reflection \\boxed{C}"), 'C');
  EXPECT_EQ(extract_answer("the patient will survive."), std::nullopt);
  EXPECT_EQ(extract_answer("\\boxed{ D. }"), 'D');
  EXPECT_EQ(extract_answer("Therefore, the answer is B."), 'B');
  EXPECT_EQ(extract_answer("the answer is A ... actually the answer is (E)"), 'E');
  EXPECT_EQ(extract_answer("the answer is Appropriate"), std::nullopt);
  EXPECT_EQ(extract_answer("answer is C but \\boxed{A}"), 'A');
  EXPECT_EQ(extract_answer("\\boxed{F}"), std::nullopt);
}

TEST(Reward, Examples) {
  EXPECT_EQ(reward("... \\boxed{A}", 'A'), 1.0);
  EXPECT_EQ(reward("... \\boxed{B}", 'A'), 0.0);
  EXPECT_EQ(reward("no answer here", 'A'), 0.0);
}

TEST(Reward, InvariantToNonAnswerText) {
  Rng rng(3);
  const std::string alphabet = "abcdefghijklmnop qrstuvwxyz.,;0123456789\n";
  for (int trial = 0; trial < 300; ++trial) {
    const char letter = option_letter(rng.index(5));
    const char correct = option_letter(rng.index(5));
    std::string noise;
    for (std::size_t i = 0, n = rng.index(80); i < n; ++i) noise += alphabet[rng.index(alphabet.size())];
    const std::string base = "Reasoning. \\boxed{" + std::string(1, letter) + "}";
    EXPECT_EQ(reward(noise + base, correct), reward(base, correct));
    EXPECT_EQ(reward("  " + base + "\n" + noise, correct), reward(base, correct));
  }
}

TEST(GroupAdvantages, Examples) {
  EXPECT_EQ(group_advantages({1, 1, 1, 1, 1, 1, 1}), std::vector<double>(7, 0.0));
  EXPECT_EQ(group_advantages({0, 0, 0}), std::vector<double>(3, 0.0));
  const auto a = group_advantages({1, 0, 0, 0, 0, 0, 0});
  EXPECT_NEAR(a[0], 2.449490, 1e-5);
  for (std::size_t i = 1; i < 7; ++i) EXPECT_NEAR(a[i], -0.408248, 1e-5);
  const auto b = group_advantages({1, 0});
  EXPECT_NEAR(b[0], 1.0, 1e-5);
  EXPECT_NEAR(b[1], -1.0, 1e-5);
  EXPECT_THROW(group_advantages({1}), InvalidArgument);
}

TEST(GroupAdvantages, ZeroMeanUnitSd) {
  Rng rng(8);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> r(2 + rng.index(30));
    for (auto& x : r) x = trial % 2 ? rng.uniform(-3, 3) : static_cast<double>(rng.bernoulli(0.3));
    const auto a = group_advantages(r);
    if (std::all_of(r.begin(), r.end(), [&](double x) { return x == r[0]; })) continue;
    double mean = 0, sq = 0;
    for (double x : a) mean += x;
    mean /= static_cast<double>(a.size());
    for (double x : a) sq += (x - mean) * (x - mean);
    EXPECT_NEAR(mean, 0.0, 1e-9);
    EXPECT_NEAR(std::sqrt(sq / static_cast<double>(a.size())), 1.0, 1e-6);
  }
}

TEST(ToyPolicy, OutputIsDistribution) {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const auto p = random_policy(rng, 5.0);
    const auto probs = p.probabilities(random_cues(rng, 2 + rng.index(4)));
    double s = 0;
    for (double x : probs) {
      EXPECT_GE(x, 0.0);
      s += x;
    }
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
}

TEST(ToyPolicy, CuesFromQuestion) {
  const auto q = separable_questions(1, 2)[0];
  const auto c = extract_cues(q);
  ASSERT_EQ(c.n_options, 5u);
  std::size_t best = 0;
  for (std::size_t i = 1; i < 5; ++i) {
    if (c.row(i)[0] > c.row(best)[0]) best = i;
  }
  EXPECT_EQ(best, q.choices.answer_index);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(c.row(i)[2 + i], 1.0);
}

TEST(GrpoStep, GradientMatchesFiniteDifferences) {
  Rng rng(2024);
  GrpoConfig cfg;
  cfg.group_size = 7;
  int clipped_configs = 0;
  for (int trial = 0; trial < 100; ++trial) {
    cfg.batch_questions = 1 + rng.index(4);
    cfg.kl_coefficient = rng.uniform(0, 0.2);
    cfg.clip_epsilon = rng.uniform(0.05, 0.5);
    const auto policy = random_policy(rng);
    const auto reference = random_policy(rng);
    std::vector<RolloutGroup> batch;
    for (std::size_t b = 0; b < cfg.batch_questions; ++b) {
      batch.push_back(random_group(rng, policy, cfg.group_size, 2 + rng.index(4)));
    }
    std::vector<double> grad;
    StepStats st;
    grpo_surrogate(policy, reference, batch, cfg, &grad, &st);
    clipped_configs += st.clip_fraction > 0;
    std::vector<double> fd(Cues::kDim);
    const double h = 1e-6;
    for (std::size_t d = 0; d < Cues::kDim; ++d) {
      auto up = policy, down = policy;
      up.theta[d] += h;
      down.theta[d] -= h;
      fd[d] = (grpo_surrogate(up, reference, batch, cfg) - grpo_surrogate(down, reference, batch, cfg)) / (2 * h);
    }
    std::vector<double> diff(Cues::kDim);
    for (std::size_t d = 0; d < Cues::kDim; ++d) diff[d] = grad[d] - fd[d];
    EXPECT_LT(norm(diff) / std::max({norm(grad), norm(fd), 1e-12}), 1e-4) << "trial " << trial;
  }
  EXPECT_GT(clipped_configs, 20);
}

TEST(GrpoStep, ZeroAdvantageAtReferenceIsFixedPoint) {
  Rng rng(5);
  GrpoConfig cfg;
  cfg.batch_questions = 3;
  ToyPolicy p = random_policy(rng);
  const ToyPolicy ref = p;
  std::vector<RolloutGroup> batch;
  for (int i = 0; i < 3; ++i) {
    auto g = random_group(rng, p, cfg.group_size, 5);
    g.rewards.assign(cfg.group_size, 1.0);
    g.advantages = group_advantages(g.rewards);
    batch.push_back(g);
  }
  const auto st = grpo_step(p, ref, batch, cfg);
  EXPECT_EQ(p.theta, ref.theta);
  EXPECT_EQ(st.grad_norm, 0.0);
}

TEST(GrpoStep, PositiveAdvantageRaisesProbability) {
  Rng rng(6);
  GrpoConfig cfg;
  cfg.batch_questions = 1;
  for (int trial = 0; trial < 50; ++trial) {
    ToyPolicy p = random_policy(rng);
    const ToyPolicy ref = p;
    RolloutGroup g;
    g.question_id = "q";
    g.cues = random_cues(rng, 5);
    const auto probs = p.probabilities(g.cues);
    for (std::size_t k = 0; k < cfg.group_size; ++k) {
      const std::size_t a = k == 0 ? 0 : 1 + rng.index(4);
      g.answer_letters.push_back(option_letter(a));
      g.completions.push_back(toy_completion(option_letter(a)));
      g.rewards.push_back(a == 0 ? 1.0 : 0.0);
      g.old_log_probs.push_back(std::log(probs[a]));
    }
    g.advantages = group_advantages(g.rewards);
    const double before = p.probabilities(g.cues)[0];
    grpo_step(p, ref, {g}, cfg);
    EXPECT_GT(p.probabilities(g.cues)[0], before);
  }
}

TEST(GrpoStep, ClippedCompletionContributesNothing) {
  Rng rng(7);
  GrpoConfig cfg;
  cfg.batch_questions = 1;
  cfg.kl_coefficient = 0.0;
  const ToyPolicy p = random_policy(rng);
  RolloutGroup g;
  g.question_id = "q";
  g.cues = random_cues(rng, 4);
  const auto probs = p.probabilities(g.cues);
  for (std::size_t k = 0; k < cfg.group_size; ++k) {
    g.answer_letters.push_back('B');
    g.completions.push_back(toy_completion('B'));
    g.rewards.push_back(k == 0 ? 1.0 : 0.0);
    g.old_log_probs.push_back(std::log(probs[1]));
  }
  g.advantages = group_advantages(g.rewards);
  // Completion 0 has a > 0 and rho = 2 > 1 + eps.
  g.old_log_probs[0] = std::log(probs[1] / 2);
  std::vector<double> with_clipped;
  grpo_surrogate(p, p, {g}, cfg, &with_clipped);
  RolloutGroup without = g;
  without.answer_letters[0] = std::nullopt;
  std::vector<double> grad_without;
  grpo_surrogate(p, p, {without}, cfg, &grad_without);
  for (std::size_t d = 0; d < Cues::kDim; ++d) {
    EXPECT_NEAR(with_clipped[d] * 7, grad_without[d] * 6, 1e-12);
  }
}

TEST(GrpoStep, LargeKlPullsTowardReference) {
  Rng rng(9);
  GrpoConfig cfg;
  cfg.batch_questions = 4;
  cfg.group_size = 400;
  cfg.kl_coefficient = 5.0;
  cfg.learning_rate = 0.02;
  const ToyPolicy ref;
  ToyPolicy p = random_policy(rng, 1.0);
  std::vector<Cues> cues;
  for (int b = 0; b < 4; ++b) cues.push_back(random_cues(rng, 5));
  const double start = norm(p.theta);
  double prev = start;
  for (int step = 0; step < 100; ++step) {
    std::vector<RolloutGroup> batch;
    for (const auto& c : cues) {
      RolloutGroup g;
      g.question_id = "q";
      g.cues = c;
      const auto probs = p.probabilities(c);
      for (std::size_t k = 0; k < cfg.group_size; ++k) {
        const auto a = rng.weighted_index(probs);
        g.answer_letters.push_back(option_letter(a));
        g.completions.push_back(toy_completion(option_letter(a)));
        g.rewards.push_back(0.0);
        g.old_log_probs.push_back(std::log(probs[a]));
      }
      g.advantages = group_advantages(g.rewards);
      batch.push_back(std::move(g));
    }
    grpo_step(p, ref, batch, cfg);
    const double now = norm(p.theta);
    ASSERT_LT(now, prev) << "step " << step;
    prev = now;
  }
  EXPECT_LT(prev, 0.8 * start);
}

TEST(GrpoStep, Errors) {
  Rng rng(10);
  GrpoConfig cfg;
  cfg.batch_questions = 2;
  ToyPolicy p;
  std::vector<RolloutGroup> one{random_group(rng, p, 7, 5)};
  EXPECT_THROW(grpo_step(p, p, one, cfg), InvalidArgument);
  auto g = random_group(rng, p, 7, 5);
  g.cues.x[3] = std::numeric_limits<double>::quiet_NaN();
  std::vector<RolloutGroup> bad{g, random_group(rng, p, 7, 5)};
  const auto before = p.theta;
  EXPECT_THROW(grpo_step(p, p, bad, cfg), NumericError);
  EXPECT_EQ(p.theta, before);
  GrpoConfig c2;
  c2.group_size = 1;
  EXPECT_THROW(c2.validate(), InvalidArgument);
  c2 = {};
  c2.clip_epsilon = 1.0;
  EXPECT_THROW(c2.validate(), InvalidArgument);
}

TEST(TrainToy, ConvergesOnSeparableFixture) {
  const auto qs = separable_questions(2500, 17);
  GrpoConfig cfg;
  cfg.seed = 3;
  const auto run = train_toy(qs, cfg, {2000, 0.2, 50});
  EXPECT_NEAR(run.curve.front().holdout_accuracy, 0.2, 0.03);
  EXPECT_GE(run.curve.back().holdout_accuracy, 0.9);
  EXPECT_EQ(run.curve.back().step, 2000u);

  const auto again = train_toy(qs, cfg, {300, 0.2, 50});
  const auto first = train_toy(qs, cfg, {300, 0.2, 50});
  std::ostringstream a, b;
  write_curve(a, again.curve);
  write_curve(b, first.curve);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_EQ(again.policy.theta, first.policy.theta);
}

TEST(TrainToy, ZeroLearningRateIsFlat) {
  const auto qs = separable_questions(500, 1);
  GrpoConfig cfg;
  cfg.learning_rate = 0.0;
  const auto run = train_toy(qs, cfg, {100, 0.2, 10});
  for (const auto& pt : run.curve) EXPECT_EQ(pt.holdout_accuracy, run.curve.front().holdout_accuracy);
  EXPECT_EQ(run.policy.theta, ToyPolicy{}.theta);
  EXPECT_THROW(train_toy({}, cfg), InvalidArgument);
}
