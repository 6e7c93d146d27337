#pragma once

#include <algorithm>
#include <cstddef>
#include <future>
#include <vector>

namespace idr {

// Calls fn(i) for i in [0, n) on up to `jobs` threads in contiguous chunks.
// The first exception thrown by any chunk is rethrown after all finish.
template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
  const std::size_t threads = std::clamp<std::size_t>(jobs < 1 ? 1 : static_cast<std::size_t>(jobs), 1, std::max<std::size_t>(n, 1));
  const std::size_t chunk = (n + threads - 1) / threads;
  auto run = [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) fn(i);
  };
  std::vector<std::future<void>> tasks;
  for (std::size_t t = 1; t < threads; ++t) {
    const std::size_t b = t * chunk, e = std::min(n, b + chunk);
    if (b < e) tasks.push_back(std::async(std::launch::async, run, b, e));
  }
  std::exception_ptr first;
  try {
    run(0, std::min(n, chunk));
  } catch (...) {
    first = std::current_exception();
  }
  for (auto& t : tasks) {
    try {
      t.get();
    } catch (...) {
      if (!first) first = std::current_exception();
    }
  }
  if (first) std::rethrow_exception(first);
}

}  // namespace idr
