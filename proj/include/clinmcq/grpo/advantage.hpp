#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "clinmcq/core/error.hpp"
#include "clinmcq/eval/extract.hpp"

namespace clinmcq {

/// 1 when the extracted answer equals `correct_letter`, else 0.
inline double reward(const std::string& completion, char correct_letter) {
  const auto got = extract_answer(completion);
  return got && *got == correct_letter ? 1.0 : 0.0;
}

/// (r - mean) / (population sd + epsilon_std). Constant groups return exact
/// zeros.
inline std::vector<double> group_advantages(const std::vector<double>& rewards,
                                            double epsilon_std = 1e-8) {
  if (rewards.size() < 2) throw InvalidArgument("group_advantages: need at least 2 rewards");
  const double n = static_cast<double>(rewards.size());
  bool constant = true;
  double mean = 0;
  for (double r : rewards) {
    if (!std::isfinite(r)) throw NumericError("group_advantages: non-finite reward");
    constant = constant && r == rewards.front();
    mean += r;
  }
  std::vector<double> out(rewards.size(), 0.0);
  if (constant) return out;
  mean /= n;
  double var = 0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double sd = std::sqrt(var / n);
  for (std::size_t i = 0; i < rewards.size(); ++i) out[i] = (rewards[i] - mean) / (sd + epsilon_std);
  return out;
}

}  // namespace clinmcq
