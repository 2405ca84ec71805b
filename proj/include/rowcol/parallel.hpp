#pragma once

#include <cstddef>

namespace rowcol::par {

// Global execution backend.  Every parallel kernel computes each output
// element entirely within one thread with a fixed-order inner loop, so the
// two backends produce bitwise-identical results; Serial exists as a reference
// implementation for testing and benchmarking.
enum class Backend { Serial, OpenMP };

Backend backend();
void set_backend(Backend b);

int max_threads();
void set_num_threads(int n);  // n <= 0 leaves the OpenMP default in place

// Runs body(i) for i in [0, n).  Parallelized over i under the OpenMP backend
// with a static schedule; plain loop otherwise.
template <typename F>
void for_index(std::size_t n, F&& body);

}  // namespace rowcol::par

// Implementation.  The template must see the pragma, so it lives here.
#ifdef _OPENMP
#include <omp.h>
#endif

namespace rowcol::par {

template <typename F>
void for_index(std::size_t n, F&& body) {
#ifdef _OPENMP
  if (backend() == Backend::OpenMP) {
    const auto sn = static_cast<long long>(n);
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < sn; ++i) {
      body(static_cast<std::size_t>(i));
    }
    return;
  }
#endif
  for (std::size_t i = 0; i < n; ++i) {
    body(i);
  }
}

}  // namespace rowcol::par
