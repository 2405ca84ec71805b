#include "rowcol/parallel.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace rowcol::par {

namespace {
Backend g_backend = Backend::OpenMP;
}

Backend backend() { return g_backend; }

void set_backend(Backend b) { g_backend = b; }

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_num_threads(int n) {
  if (n <= 0) return;
#ifdef _OPENMP
  omp_set_num_threads(n);
#endif
}

}  // namespace rowcol::par
