#include "wavebank/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <thread>
#include <vector>

#include "wavebank/error.hpp"

namespace wavebank {

namespace {
std::atomic<int> g_max_threads{1};
}

void set_max_threads(int n) {
  if (n < 1) throw ConfigError("thread count must be >= 1");
  g_max_threads.store(n);
}

int max_threads() { return g_max_threads.load(); }

void parallel_for(int64_t n, int64_t min_per_thread,
                  const std::function<void(int64_t, int64_t)>& fn) {
  if (n <= 0) return;
  const int threads = std::min<int64_t>(
      max_threads(), std::max<int64_t>(1, n / std::max<int64_t>(1, min_per_thread)));
  if (threads <= 1) {
    fn(0, n);
    return;
  }
  const int64_t chunk = (n + threads - 1) / threads;
  std::vector<std::thread> workers;
  workers.reserve(static_cast<size_t>(threads) - 1);
  for (int t = 1; t < threads; ++t) {
    const int64_t begin = t * chunk;
    const int64_t end = std::min<int64_t>(n, begin + chunk);
    if (begin >= end) break;
    workers.emplace_back([&fn, begin, end] { fn(begin, end); });
  }
  fn(0, std::min<int64_t>(n, chunk));
  for (auto& w : workers) w.join();
}

}  // namespace wavebank
