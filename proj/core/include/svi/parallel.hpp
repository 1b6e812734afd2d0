#pragma once

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace svi {

// Worker count: SVI_THREADS if set (clamped to [1, 256]), else the hardware
// concurrency. Results never depend on this value: parallel loops use a fixed
// work partition by index, so any schedule produces identical output.
inline int thread_count() {
  if (const char* env = std::getenv("SVI_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<int>(std::min(v, 256L));
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(std::min(hw, 64u));
}

namespace detail {
// Set inside worker threads so nested parallel loops degrade to serial
// execution instead of multiplying thread counts.
inline thread_local bool in_parallel_worker = false;
}  // namespace detail

// Runs fn(i) for i in [0, n) on a static contiguous partition; each item's
// index is the only input fn receives, so outputs stay deterministic as long
// as fn writes only to slot i of pre-sized storage. Nested calls run serially.
template <typename Fn>
void parallel_for(long n, Fn&& fn, int threads = 0) {
  if (n <= 0) return;
  const int workers =
      detail::in_parallel_worker
          ? 1
          : static_cast<int>(std::max<long>(
                1, std::min<long>(threads > 0 ? threads : thread_count(), n)));
  if (workers == 1) {
    for (long i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::mutex err_mutex;
  std::exception_ptr first_error;
  // Static contiguous partition: worker w handles [w*n/workers, (w+1)*n/workers).
  for (int w = 0; w < workers; ++w) {
    const long lo = n * w / workers;
    const long hi = n * (w + 1) / workers;
    pool.emplace_back([&, lo, hi] {
      detail::in_parallel_worker = true;
      try {
        for (long i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace svi
