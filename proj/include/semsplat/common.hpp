#pragma once

#include <cstdlib>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace semsplat {

// Validation failures (bad inputs, bad files) vs internal logic errors.
// The CLI maps these to exit codes 1 and 2.
struct ValidationError : std::runtime_error {
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};
struct BehindCameraError : ValidationError {
  explicit BehindCameraError(const std::string& msg) : ValidationError(msg) {}
};

// Worker cap from SEMSPLAT_THREADS (0 or unset = auto). Re-read on every
// call so a harness can flip the cap between runs within one process.
inline int worker_count() {
  const char* env = std::getenv("SEMSPLAT_THREADS");
  int v = env ? std::atoi(env) : 0;
  if (v <= 0) v = static_cast<int>(std::thread::hardware_concurrency());
  return v > 0 ? v : 1;
}

// Static block partition over [0, n). Each index is processed exactly once and
// workers touch disjoint index ranges, so results match the serial order.
inline void parallel_for(int64_t n, const std::function<void(int64_t)>& fn) {
  int workers = worker_count();
  if (workers <= 1 || n < 2) {
    for (int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  if (static_cast<int64_t>(workers) > n) workers = static_cast<int>(n);
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(workers));
  int64_t chunk = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    int64_t lo = w * chunk;
    int64_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (int64_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace semsplat
