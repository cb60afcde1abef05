#pragma once

// Deterministic data parallelism: work items are independent and results are
// written to their own slot, so the thread count never changes the output.

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace jumpent {

class WorkerPool {
 public:
  explicit WorkerPool(unsigned threads = 1) : threads_(std::max(1u, threads)) {}

  unsigned threads() const { return threads_; }

  /// Calls body(i) for every i in [0, n). The first exception thrown by any
  /// work item (lowest index wins) is rethrown on the calling thread.
  template <class Body>
  void for_each(std::size_t n, Body&& body) const {
    if (threads_ == 1 || n < 2) {
      for (std::size_t i = 0; i < n; ++i) body(i);
      return;
    }
    constexpr std::size_t kChunk = 64;
    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::exception_ptr error;
    std::size_t error_index = n;
    auto worker = [&] {
      for (;;) {
        const std::size_t begin = next.fetch_add(kChunk);
        if (begin >= n) return;
        const std::size_t end = std::min(n, begin + kChunk);
        for (std::size_t i = begin; i < end; ++i) {
          try {
            body(i);
          } catch (...) {
            std::lock_guard<std::mutex> lock(error_mutex);
            if (i < error_index) {
              error_index = i;
              error = std::current_exception();
            }
            return;
          }
        }
      }
    };
    std::vector<std::thread> pool;
    const unsigned count = static_cast<unsigned>(std::min<std::size_t>(threads_, n));
    pool.reserve(count);
    for (unsigned t = 0; t < count; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
  }

 private:
  unsigned threads_;
};

}  // namespace jumpent
