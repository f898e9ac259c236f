#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace sumask {

// Runs fn(0..n-1) on up to `max_parallel` threads. Results must be written
// into index-addressed storage by the caller, so output order never depends
// on scheduling. If any call throws, the exception of the lowest failing
// index is rethrown after all workers finish.
inline void parallel_for(std::size_t n, int max_parallel, const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  const auto workers = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(max_parallel, 1, static_cast<std::ptrdiff_t>(n)));
  std::vector<std::exception_ptr> errors(n);
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
  } else {
    std::atomic<std::size_t> next{0};
    {
      std::vector<std::jthread> pool;
      pool.reserve(workers);
      for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&] {
          for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
            try {
              fn(i);
            } catch (...) {
              errors[i] = std::current_exception();
            }
          }
        });
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace sumask
