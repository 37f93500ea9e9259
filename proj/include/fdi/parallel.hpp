#pragma once

#include <algorithm>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace fdi {

/// Runs body(i) for i in [0, count) on up to `workers` threads, in contiguous
/// blocks. Results must be written to per-index slots; the first exception is
/// rethrown on the calling thread.
template <typename Body>
void parallel_for(long count, int workers, Body&& body) {
  if (count <= 0) return;
  const long threads = std::clamp<long>(workers, 1, count);
  if (threads == 1) {
    for (long i = 0; i < count; ++i) body(i);
    return;
  }
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  const long block = (count + threads - 1) / threads;
  for (long t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        const long end = std::min(count, (t + 1) * block);
        for (long i = t * block; i < end; ++i) body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

inline int default_workers() { return std::max(1u, std::thread::hardware_concurrency()); }

}  // namespace fdi
