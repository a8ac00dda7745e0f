#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace sdr {

// Runs fn(chunk) for chunk in [0, num_chunks) on up to `workers` threads and
// returns the results in chunk order, so any reduction over them is
// independent of the worker count.
template <typename Fn>
auto parallel_chunks(std::size_t num_chunks, unsigned workers, Fn&& fn)
    -> std::vector<decltype(fn(std::size_t{}))> {
  using Result = decltype(fn(std::size_t{}));
  std::vector<Result> results(num_chunks);
  const unsigned threads =
      static_cast<unsigned>(std::min<std::size_t>(std::max(1u, workers), num_chunks));
  if (threads <= 1) {
    for (std::size_t c = 0; c < num_chunks; ++c) results[c] = fn(c);
    return results;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t c = next++; c < num_chunks; c = next++) {
        try {
          results[c] = fn(c);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
  return results;
}

}  // namespace sdr
