#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <thread>
#include <vector>

namespace udae {

// Worker count resolution order: UDAE_THREADS env var, then hardware
// concurrency. Results never depend on the count because every parallel_for
// call writes disjoint outputs with a fixed per-element accumulation order.
inline int thread_count() {
  static const int n = [] {
    if (const char *env = std::getenv("UDAE_THREADS")) {
      int v = std::atoi(env);
      if (v >= 1)
        return v;
    }
    unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
  }();
  return n;
}

// Splits [0, n) into contiguous chunks, one per worker. f(begin, end).
template <typename F> void parallel_for(std::int64_t n, F &&f) {
  const int workers = std::min<std::int64_t>(thread_count(), n);
  if (workers <= 1 || n < 2) {
    if (n > 0)
      f(std::int64_t{0}, n);
    return;
  }
  std::vector<std::thread> threads;
  threads.reserve(static_cast<std::size_t>(workers));
  const std::int64_t chunk = (n + workers - 1) / workers;
  for (int t = 0; t < workers; ++t) {
    const std::int64_t begin = t * chunk;
    const std::int64_t end = std::min(begin + chunk, n);
    if (begin >= end)
      break;
    threads.emplace_back([&f, begin, end] { f(begin, end); });
  }
  for (auto &th : threads)
    th.join();
}

} // namespace udae
