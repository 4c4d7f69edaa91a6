#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace ssdd {

/// Worker count from SSDD_THREADS; unset, empty or 0 means serial execution.
inline std::size_t configured_threads() {
  const char* env = std::getenv("SSDD_THREADS");
  if (!env || !*env) return 0;
  try {
    const long v = std::stol(env);
    return v > 0 ? static_cast<std::size_t>(v) : 0;
  } catch (const std::exception&) {
    return 0;
  }
}

/// Evaluates fn(i) for i in [0, n) and returns the results in index order.
/// Every element is computed independently, so the output does not depend on
/// the thread count.
template <typename Fn>
auto parallel_map(std::size_t n, Fn&& fn, std::size_t threads = configured_threads()) {
  using R = decltype(fn(std::size_t{0}));
  std::vector<R> out(n);
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) out[i] = fn(i);
    return out;
  }
  const std::size_t workers = std::min(threads, n);
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) out[i] = fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

}  // namespace ssdd
