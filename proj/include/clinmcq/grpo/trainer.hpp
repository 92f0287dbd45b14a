#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "clinmcq/core/parallel.hpp"
#include "clinmcq/core/rng.hpp"
#include "clinmcq/core/text.hpp"
#include "clinmcq/grpo/advantage.hpp"
#include "clinmcq/grpo/policy.hpp"

namespace clinmcq {

struct GrpoConfig {
  std::size_t group_size = 7;
  std::size_t batch_questions = 35;
  double clip_epsilon = 0.2;
  double kl_coefficient = 0.04;
  double learning_rate = 0.5;
  double epsilon_std = 1e-8;
  std::uint64_t seed = 1;
  std::size_t updates_per_batch = 1;

  void validate() const {
    require(group_size >= 2, "grpo: group_size must be >= 2");
    require(batch_questions >= 1, "grpo: batch_questions must be >= 1");
    require(clip_epsilon > 0 && clip_epsilon < 1, "grpo: clip_epsilon must be in (0, 1)");
    require(kl_coefficient >= 0, "grpo: kl_coefficient must be >= 0");
    require(learning_rate >= 0 && std::isfinite(learning_rate), "grpo: learning_rate must be >= 0");
    require(epsilon_std >= 0, "grpo: epsilon_std must be >= 0");
    require(updates_per_batch >= 1, "grpo: updates_per_batch must be >= 1");
  }
};

/// G sampled completions for one question, with the rollout policy's
/// log-probability of each sampled letter.
struct RolloutGroup {
  std::string question_id;
  Cues cues;
  std::vector<std::string> completions;
  std::vector<double> rewards;
  std::vector<double> advantages;
  std::vector<std::optional<char>> answer_letters;
  std::vector<double> old_log_probs;

  void validate(std::size_t g) const {
    const bool ok = completions.size() == g && rewards.size() == g && advantages.size() == g &&
                    answer_letters.size() == g && old_log_probs.size() == g;
    if (!ok) throw InvalidArgument("rollout group '" + question_id + "': lists must have length G");
  }
};

struct StepStats {
  double mean_reward = 0;
  double mean_abs_advantage = 0;
  double kl = 0;
  double grad_norm = 0;
  double clip_fraction = 0;
  double objective = 0;
};

/// Clipped surrogate minus the KL penalty, averaged over every completion that
/// carries a letter:
///   min(rho a, clip(rho, 1-eps, 1+eps) a) - beta (r - log r - 1),
///   rho = pi(y) / pi_old(y),  r = pi_ref(y) / pi(y).
/// Returns the objective and, when `grad` is given, its gradient in theta.
inline double grpo_surrogate(const ToyPolicy& policy, const ToyPolicy& reference,
                             const std::vector<RolloutGroup>& batch, const GrpoConfig& cfg,
                             std::vector<double>* grad = nullptr, StepStats* stats = nullptr) {
  const double eps = cfg.clip_epsilon;
  double total = 0;
  double kl_sum = 0;
  std::size_t count = 0;
  std::size_t clipped = 0;
  if (grad) grad->assign(Cues::kDim, 0.0);
  for (const auto& g : batch) {
    g.validate(cfg.group_size);
    const auto probs = policy.probabilities(g.cues);
    const auto ref_probs = reference.probabilities(g.cues);
    for (std::size_t k = 0; k < cfg.group_size; ++k) {
      if (!g.answer_letters[k]) continue;
      const auto action = letter_index(*g.answer_letters[k]);
      if (!action || *action >= g.cues.n_options) {
        throw InvalidArgument("rollout group '" + g.question_id + "': letter outside options");
      }
      const double logp = std::log(probs[*action]);
      const double rho = std::exp(logp - g.old_log_probs[k]);
      const double a = g.advantages[k];
      const double unclipped = rho * a;
      const double clipped_v = std::clamp(rho, 1 - eps, 1 + eps) * a;
      const bool clip_active = clipped_v < unclipped;
      const double r = ref_probs[*action] / probs[*action];
      const double kl = r - std::log(r) - 1;
      total += std::min(unclipped, clipped_v) - cfg.kl_coefficient * kl;
      kl_sum += kl;
      clipped += clip_active;
      ++count;
      if (grad) {
        const double coef = (clip_active ? 0.0 : a * rho) + cfg.kl_coefficient * (r - 1);
        const auto glp = policy.grad_log_prob(g.cues, *action, probs);
        for (std::size_t d = 0; d < Cues::kDim; ++d) (*grad)[d] += coef * glp[d];
      }
    }
  }
  const double n = count ? static_cast<double>(count) : 1.0;
  if (grad) {
    for (auto& v : *grad) v /= n;
  }
  if (stats) {
    stats->kl = kl_sum / n;
    stats->clip_fraction = static_cast<double>(clipped) / n;
    stats->objective = total / n;
  }
  return total / n;
}

/// One gradient-ascent step on the surrogate. A non-finite gradient aborts with
/// NumericError and leaves the policy unchanged.
inline StepStats grpo_step(ToyPolicy& policy, const ToyPolicy& reference,
                           const std::vector<RolloutGroup>& batch, const GrpoConfig& cfg) {
  cfg.validate();
  if (batch.size() != cfg.batch_questions) {
    throw InvalidArgument("grpo_step: batch has " + std::to_string(batch.size()) +
                          " groups, config expects " + std::to_string(cfg.batch_questions));
  }
  for (const auto& g : batch) {
    for (double lp : g.old_log_probs) {
      if (!(lp <= 0) || !std::isfinite(lp)) {
        throw InvalidArgument("grpo_step: old probabilities must be positive");
      }
    }
  }
  StepStats st;
  std::vector<double> grad;
  grpo_surrogate(policy, reference, batch, cfg, &grad, &st);
  double norm = 0;
  for (double v : grad) norm += v * v;
  st.grad_norm = std::sqrt(norm);
  if (!std::isfinite(st.grad_norm)) {
    std::string detail;
    for (std::size_t d = 0; d < grad.size(); ++d) {
      if (!std::isfinite(grad[d])) detail += " theta[" + std::to_string(d) + "]";
    }
    throw NumericError("grpo_step: non-finite gradient in" + detail);
  }
  for (std::size_t d = 0; d < grad.size(); ++d) policy.theta[d] += cfg.learning_rate * grad[d];
  double rsum = 0;
  double asum = 0;
  std::size_t n = 0;
  for (const auto& g : batch) {
    for (std::size_t k = 0; k < g.rewards.size(); ++k, ++n) {
      rsum += g.rewards[k];
      asum += std::fabs(g.advantages[k]);
    }
  }
  st.mean_reward = n ? rsum / static_cast<double>(n) : 0;
  st.mean_abs_advantage = n ? asum / static_cast<double>(n) : 0;
  return st;
}

// Toy training loop -----------------------------------------------------------

struct CurvePoint {
  std::size_t step = 0;
  double mean_reward = 0;
  double holdout_accuracy = 0;
  double kl = 0;
  double grad_norm = 0;
};

struct ToyRun {
  ToyPolicy policy;
  std::vector<CurvePoint> curve;
  std::size_t n_train = 0;
  std::size_t n_holdout = 0;
};

struct ToyOptions {
  std::size_t steps = 2000;
  double holdout_fraction = 0.2;
  std::size_t eval_every = 1;
};

/// Fraction of questions whose highest-probability option is the answer.
inline double toy_accuracy(const ToyPolicy& policy, const std::vector<Cues>& cues,
                           const std::vector<std::size_t>& answers) {
  if (cues.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < cues.size(); ++i) hit += policy.argmax(cues[i]) == answers[i];
  return static_cast<double>(hit) / static_cast<double>(cues.size());
}

inline std::string toy_completion(char letter) {
  return std::string(kCotPrefix) + " The option closest to the record fits best. \\boxed{" + letter + "}";
}

/// Samples batch_questions training questions per step, G letters each from the
/// current policy, rewards them through answer extraction, normalizes within
/// each group, and applies grpo_step against the initial policy as reference.
/// Row 0 of the curve is the untrained policy.
inline ToyRun train_toy(const std::vector<Question>& questions, const GrpoConfig& cfg,
                        const ToyOptions& opts = {}, const Executor& exec = {}) {
  cfg.validate();
  if (questions.empty()) throw InvalidArgument("train_toy: empty question file");
  require(opts.holdout_fraction > 0 && opts.holdout_fraction < 1,
          "train_toy: holdout_fraction must be in (0, 1)");
  require(opts.eval_every >= 1, "train_toy: eval_every must be >= 1");

  std::vector<std::size_t> order(questions.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng split_rng(derive_seed(cfg.seed, "train_toy/holdout"));
  split_rng.shuffle(order);
  const auto n_hold = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(opts.holdout_fraction * static_cast<double>(questions.size()))));
  if (n_hold >= questions.size()) throw InvalidArgument("train_toy: need at least 2 questions");

  std::vector<Cues> train_cues, hold_cues;
  std::vector<std::size_t> train_ans, hold_ans;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto& q = questions[order[i]];
    (i < n_hold ? hold_cues : train_cues).push_back(extract_cues(q));
    (i < n_hold ? hold_ans : train_ans).push_back(q.choices.answer_index);
  }

  ToyRun run;
  run.n_train = train_cues.size();
  run.n_holdout = hold_cues.size();
  const ToyPolicy reference = run.policy;
  run.curve.push_back({0, 0.0, toy_accuracy(run.policy, hold_cues, hold_ans), 0.0, 0.0});

  Rng pick_rng(derive_seed(cfg.seed, "train_toy/batches"));
  std::vector<RolloutGroup> batch(cfg.batch_questions);
  std::vector<std::size_t> picks(cfg.batch_questions);
  for (std::size_t step = 1; step <= opts.steps; ++step) {
    for (auto& p : picks) p = pick_rng.index(train_cues.size());
    parallel_for(cfg.batch_questions, exec, [&](std::size_t j) {
      const auto& c = train_cues[picks[j]];
      Rng rng(derive_seed(cfg.seed, "train_toy/rollout", step * cfg.batch_questions + j));
      const auto probs = run.policy.probabilities(c);
      const char correct = option_letter(train_ans[picks[j]]);
      RolloutGroup g;
      g.question_id = std::to_string(picks[j]);
      g.cues = c;
      for (std::size_t k = 0; k < cfg.group_size; ++k) {
        const auto a = rng.weighted_index(probs);
        const char letter = option_letter(a);
        g.completions.push_back(toy_completion(letter));
        g.answer_letters.push_back(extract_answer(g.completions.back()));
        g.rewards.push_back(reward(g.completions.back(), correct));
        g.old_log_probs.push_back(std::log(probs[a]));
      }
      g.advantages = group_advantages(g.rewards, cfg.epsilon_std);
      batch[j] = std::move(g);
    });
    StepStats st;
    for (std::size_t u = 0; u < cfg.updates_per_batch; ++u) st = grpo_step(run.policy, reference, batch, cfg);
    if (step % opts.eval_every == 0 || step == opts.steps) {
      run.curve.push_back({step, st.mean_reward, toy_accuracy(run.policy, hold_cues, hold_ans), st.kl,
                           st.grad_norm});
    }
  }
  return run;
}

inline void write_curve(std::ostream& out, const std::vector<CurvePoint>& curve) {
  out << "step\tmean_reward\tholdout_accuracy\tkl\tgrad_norm\n";
  for (const auto& p : curve) {
    out << p.step << '\t' << format_fixed(p.mean_reward, 6) << '\t' << format_fixed(p.holdout_accuracy, 6)
        << '\t' << format_fixed(p.kl, 8) << '\t' << format_fixed(p.grad_norm, 8) << '\n';
  }
}

}  // namespace clinmcq
