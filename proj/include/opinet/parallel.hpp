#pragma once

#include <cstddef>

#include <omp.h>

namespace opinet {

/// Worker count for OpenMP kernels. Defaults to the OPINET_THREADS
/// environment variable when set, otherwise omp_get_max_threads().
int num_threads();
void set_num_threads(int n);

/// Runs body(i) for i in [0, n). Iterations must be independent and write
/// disjoint outputs; scheduling is static so a given i always runs whole on
/// one thread.
template <typename Body>
void parallel_for(std::size_t n, Body&& body, std::size_t min_parallel = 2) {
  const int threads = num_threads();
  if (threads <= 1 || n < min_parallel) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  const auto count = static_cast<long long>(n);
#pragma omp parallel for schedule(static) num_threads(threads)
  for (long long i = 0; i < count; ++i) body(static_cast<std::size_t>(i));
}

}  // namespace opinet
