#include "common.hpp"

#include <algorithm>
#include <cstdlib>
#include <thread>

namespace trend {

int env_thread_cap() {
  const char* v = std::getenv("TREND_THREADS");
  if (!v || !*v) return 1;
  int n = std::atoi(v);
  if (n < 1) n = 1;
  unsigned hw = std::thread::hardware_concurrency();
  if (hw > 0 && n > int(hw)) n = int(hw);
  return n;
}

void parallel_for(int64_t n, const std::function<void(int64_t)>& fn) {
  int threads = env_thread_cap();
  if (threads <= 1 || n < 256) {
    for (int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  int64_t chunk = (n + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    int64_t lo = t * chunk, hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (int64_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace trend
