#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace concept_audit {

/// Worker cap: CONCEPT_AUDIT_THREADS if set to a positive integer, otherwise
/// the hardware concurrency (at least 1).
std::size_t worker_count();

/// Splits [0, n) into contiguous chunks, runs `partial(begin, end)` on each
/// (possibly concurrently) and folds the results left to right with `merge`.
/// Chunk boundaries depend only on n and the worker count; with an
/// associative, commutative merge (integer counts) the result is independent
/// of both.
template <typename T, typename Partial, typename Merge>
T parallel_reduce(std::size_t n, std::size_t min_chunk, Partial partial, Merge merge) {
  const std::size_t workers =
      std::max<std::size_t>(1, std::min(worker_count(), n / std::max<std::size_t>(min_chunk, 1)));
  if (workers <= 1) return partial(std::size_t{0}, n);

  std::vector<T> results(workers);
  std::vector<std::thread> threads;
  threads.reserve(workers);
  const std::size_t step = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = std::min(n, w * step);
    const std::size_t end = std::min(n, begin + step);
    threads.emplace_back([&, w, begin, end] { results[w] = partial(begin, end); });
  }
  for (auto& t : threads) t.join();
  T acc = std::move(results.front());
  for (std::size_t w = 1; w < workers; ++w) merge(acc, std::move(results[w]));
  return acc;
}

}  // namespace concept_audit
