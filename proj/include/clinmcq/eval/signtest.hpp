#pragma once

#include <algorithm>
#include <vector>

#include "clinmcq/core/error.hpp"

namespace clinmcq {

/// Binomial(n, 1/2) probabilities built row by row with halving. Every entry is
/// a dyadic rational, so small-n tails are exact in binary floating point.
inline std::vector<double> binomial_half_pmf(std::size_t n) {
  std::vector<double> row{1.0};
  row.reserve(n + 1);
  for (std::size_t i = 0; i < n; ++i) {
    row.push_back(0.0);
    for (std::size_t j = row.size() - 1; j > 0; --j) row[j] = 0.5 * (row[j] + row[j - 1]);
    row[0] *= 0.5;
  }
  return row;
}

struct SignTest {
  std::size_t k = 0;
  std::size_t n = 0;
  double one_sided_p = 1;  // P(X >= k)
  double two_sided_p = 1;  // min(1, 2 min(P(X >= k), P(X <= k)))
};

inline SignTest sign_test(std::size_t k, std::size_t n) {
  require(n >= 1, "sign test: n must be >= 1");
  require(k <= n, "sign test: k must be <= n");
  const auto pmf = binomial_half_pmf(n);
  double upper = 0, lower = 0;
  for (std::size_t i = n + 1; i-- > k;) upper += pmf[i];  // small terms first
  for (std::size_t i = 0; i <= k; ++i) lower += pmf[i];
  SignTest t;
  t.k = k;
  t.n = n;
  t.one_sided_p = std::min(1.0, upper);
  t.two_sided_p = std::min(1.0, 2 * std::min(upper, lower));
  return t;
}

}  // namespace clinmcq
