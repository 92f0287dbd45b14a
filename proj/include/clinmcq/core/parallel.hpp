#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace clinmcq {

/// Worker budget handed down from the CLI. Modules never size their own pools.
struct Executor {
  unsigned jobs = 1;

  static Executor hardware() {
    return Executor{std::max(1u, std::thread::hardware_concurrency())};
  }
};

/// Runs fn(i) for i in [0, n) on up to `exec.jobs` threads. Work is claimed by
/// an atomic counter; callers write results into slot i so the merged output
/// is independent of scheduling. The exception from the lowest failing index
/// is rethrown after all workers join.
template <typename Fn>
void parallel_for(std::size_t n, const Executor& exec, Fn&& fn) {
  const std::size_t workers = std::min<std::size_t>(std::max(1u, exec.jobs), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr first_error;
  std::size_t first_error_index = n;
  auto body = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1, std::memory_order_relaxed);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(err_mu);
        if (i < first_error_index) {
          first_error_index = i;
          first_error = std::current_exception();
        }
      }
    }
  };
  std::vector<std::jthread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(body);
  body();
  pool.clear();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace clinmcq
