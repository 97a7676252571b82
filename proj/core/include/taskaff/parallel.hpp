#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace taskaff {

// Runs body(i) for i in [0, count) on up to `workers` threads. If any call
// throws, the exception from the lowest index is rethrown after all workers
// finish. workers <= 1 runs inline.
template <typename Body>
void parallel_for(std::size_t count, std::size_t workers, Body&& body) {
  if (workers <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::size_t failed_index = count;
  std::exception_ptr failure;
  auto run = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (i < failed_index) {
          failed_index = i;
          failure = std::current_exception();
        }
      }
    }
  };
  std::vector<std::jthread> pool;
  const std::size_t n = std::min(workers, count);
  pool.reserve(n);
  for (std::size_t t = 0; t < n; ++t) pool.emplace_back(run);
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace taskaff
