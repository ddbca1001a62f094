#include "bps/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace bps {

namespace {
std::atomic<std::size_t> g_threads{1};
thread_local bool t_in_parallel = false;
}  // namespace

void set_num_threads(std::size_t n) { g_threads = std::max<std::size_t>(1, n); }
std::size_t num_threads() { return g_threads; }

void parallel_for(std::size_t begin, std::size_t end, const std::function<void(std::size_t)>& fn) {
  if (end <= begin) return;
  const std::size_t count = end - begin;
  const std::size_t workers = std::min(g_threads.load(), count);
  if (workers <= 1 || t_in_parallel) {
    for (std::size_t i = begin; i < end; ++i) fn(i);
    return;
  }

  // Keep the error from the lowest index so failures are reported the same way
  // for every thread count.
  std::exception_ptr first_error;
  std::size_t first_error_index = end;
  std::mutex error_mutex;
  auto run_chunk = [&](std::size_t w) {
    t_in_parallel = true;
    const std::size_t lo = begin + count * w / workers;
    const std::size_t hi = begin + count * (w + 1) / workers;
    for (std::size_t i = lo; i < hi; ++i) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (i < first_error_index) {
          first_error_index = i;
          first_error = std::current_exception();
        }
        break;
      }
    }
    t_in_parallel = false;
  };

  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(run_chunk, w);
  run_chunk(0);
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace bps
