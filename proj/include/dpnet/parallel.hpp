#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace dpnet {

inline int resolve_workers(int n_workers) {
  if (n_workers > 0) return n_workers;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs fn(i) for i in [0, n).  Each index is processed exactly once; results
// must go to per-index slots so the outcome is identical for any worker
// count.
inline void parallel_for(size_t n, int n_workers,
                         const std::function<void(size_t)>& fn) {
  const int workers = std::min<int>(resolve_workers(n_workers),
                                    static_cast<int>(std::max<size_t>(n, 1)));
  if (workers <= 1 || n <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (size_t i = static_cast<size_t>(w); i < n;
           i += static_cast<size_t>(workers))
        fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace dpnet
