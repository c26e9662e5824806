#pragma once

// Path-parallel loops with a fixed chunk decomposition. Reductions combine the
// per-chunk partials in chunk order, so results do not depend on how many
// threads executed the chunks.

#include <cstddef>
#include <vector>

#include <omp.h>

namespace bsde::parallel {

inline constexpr std::size_t kChunk = 4096;

inline std::size_t num_chunks(std::size_t n) { return (n + kChunk - 1) / kChunk; }

/// Calls fn(begin, end) for every chunk of [0, n).
template <class Fn>
void for_chunks(std::size_t n, Fn&& fn) {
  const auto chunks = static_cast<long>(num_chunks(n));
#pragma omp parallel for schedule(static) if (chunks > 1)
  for (long c = 0; c < chunks; ++c) {
    const std::size_t begin = static_cast<std::size_t>(c) * kChunk;
    const std::size_t end = begin + kChunk < n ? begin + kChunk : n;
    fn(begin, end);
  }
}

/// Deterministic sum of fn(m) for m in [0, n).
template <class Fn>
double sum(std::size_t n, Fn&& fn) {
  std::vector<double> partial(num_chunks(n), 0.0);
  const auto chunks = static_cast<long>(partial.size());
#pragma omp parallel for schedule(static) if (chunks > 1)
  for (long c = 0; c < chunks; ++c) {
    const std::size_t begin = static_cast<std::size_t>(c) * kChunk;
    const std::size_t end = begin + kChunk < n ? begin + kChunk : n;
    double acc = 0.0;
    for (std::size_t m = begin; m < end; ++m) acc += fn(m);
    partial[static_cast<std::size_t>(c)] = acc;
  }
  double total = 0.0;
  for (double p : partial) total += p;
  return total;
}

inline void set_num_threads(int n) { omp_set_num_threads(n); }
inline int max_threads() { return omp_get_max_threads(); }

} // namespace bsde::parallel
