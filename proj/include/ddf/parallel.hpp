#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace ddf {

/// Worker count used by every parallel loop in the library. 0 means
/// "use DDF_THREADS, else hardware concurrency".
inline std::atomic<unsigned>& thread_setting() {
  static std::atomic<unsigned> n{0};
  return n;
}

inline void set_threads(unsigned n) { thread_setting().store(n); }

inline unsigned num_threads() {
  if (unsigned n = thread_setting().load(); n > 0) return n;
  if (const char* env = std::getenv("DDF_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs body(i) for i in [begin, end). Work is handed out in contiguous
/// chunks; callers must write results to per-index slots so the outcome does
/// not depend on the worker count. The first exception thrown is rethrown.
template <typename Body>
void parallel_for(std::size_t begin, std::size_t end, Body&& body, std::size_t grain = 1) {
  if (end <= begin) return;
  const std::size_t n = end - begin;
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(num_threads(), (n + grain - 1) / grain));
  if (workers <= 1) {
    for (std::size_t i = begin; i < end; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{begin};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto run = [&] {
    try {
      for (;;) {
        const std::size_t start = next.fetch_add(grain);
        if (start >= end) break;
        const std::size_t stop = std::min(end, start + grain);
        for (std::size_t i = start; i < stop; ++i) body(i);
      }
    } catch (...) {
      std::lock_guard lock(error_mutex);
      if (!error) error = std::current_exception();
      next.store(end);
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (unsigned w = 1; w < workers; ++w) pool.emplace_back(run);
  run();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace ddf
