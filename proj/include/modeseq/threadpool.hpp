#pragma once

#include <atomic>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace modeseq {

// Runs fn(0..n-1) across up to `jobs` threads. Results must be written to
// per-index slots by the caller; the first exception is rethrown.
inline void parallel_for(int64_t n, int jobs, const std::function<void(int64_t)>& fn) {
  if (n <= 0) return;
  if (jobs < 1) jobs = 1;
  if (jobs == 1 || n == 1) {
    for (int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int64_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  auto worker = [&] {
    for (;;) {
      int64_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> threads;
  int count = static_cast<int>(std::min<int64_t>(jobs, n));
  threads.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) threads.emplace_back(worker);
  for (std::thread& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace modeseq
