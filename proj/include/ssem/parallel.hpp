#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace ssem {

/// Process-wide cap on worker threads; 1 means strictly serial.
void set_thread_count(unsigned count);
unsigned thread_count();

/// Calls fn(i) for i in [0, n), split into contiguous chunks across workers.
/// fn must only write to state owned by index i.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const std::size_t workers = std::min<std::size_t>(thread_count(), n / 1024 + 1);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&fn, begin, end] {
      for (std::size_t i = begin; i < end; ++i) fn(i);
    });
  }
}

}  // namespace ssem
