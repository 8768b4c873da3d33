#include "stereo4p/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <thread>
#include <vector>

#include "stereo4p/error.hpp"

namespace stereo4p {
namespace {

std::atomic<int>& configured_threads() {
  static std::atomic<int> n{std::max(1, static_cast<int>(std::thread::hardware_concurrency()))};
  return n;
}

// Set on worker threads; nested loops then run inline.
thread_local bool in_worker = false;

}  // namespace

int thread_count() { return configured_threads().load(std::memory_order_relaxed); }

void set_thread_count(int n) {
  if (n < 1) throw ArgumentError("thread count must be at least 1");
  configured_threads().store(n, std::memory_order_relaxed);
}

void parallel_for(std::ptrdiff_t begin, std::ptrdiff_t end,
                  const std::function<void(std::ptrdiff_t)>& fn) {
  const std::ptrdiff_t n = end - begin;
  if (n <= 0) return;
  const std::ptrdiff_t workers = std::min<std::ptrdiff_t>(thread_count(), n);
  if (workers <= 1 || in_worker) {
    for (std::ptrdiff_t i = begin; i < end; ++i) fn(i);
    return;
  }

  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  pool.reserve(static_cast<std::size_t>(workers));
  for (std::ptrdiff_t w = 0; w < workers; ++w) {
    const std::ptrdiff_t lo = begin + n * w / workers;
    const std::ptrdiff_t hi = begin + n * (w + 1) / workers;
    pool.emplace_back([&, lo, hi, w] {
      in_worker = true;
      try {
        for (std::ptrdiff_t i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace stereo4p
