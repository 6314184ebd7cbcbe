#pragma once

#include <atomic>
#include <cstddef>
#include <thread>
#include <vector>

namespace gdpo {

// Runs f(i) for i in [0, n). Each cell must depend only on its index (callers
// pass per-cell split RNG streams), so the result is identical no matter how
// work is scheduled. Intended for benchmark grids and repetition loops.
template <class F>
void parallel_for(size_t n, F&& f, unsigned n_threads = 0) {
  if (n == 0) return;
  unsigned hw = n_threads ? n_threads : std::thread::hardware_concurrency();
  if (hw <= 1 || n == 1) {
    for (size_t i = 0; i < n; ++i) f(i);
    return;
  }
  if (hw > n) hw = static_cast<unsigned>(n);
  std::atomic<size_t> next{0};
  std::vector<std::thread> workers;
  workers.reserve(hw);
  for (unsigned w = 0; w < hw; ++w) {
    workers.emplace_back([&] {
      for (;;) {
        const size_t i = next.fetch_add(1, std::memory_order_relaxed);
        if (i >= n) return;
        f(i);
      }
    });
  }
  for (auto& t : workers) t.join();
}

}  // namespace gdpo
