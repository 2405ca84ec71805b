// Benchmarks the dense kernels under the serial reference backend and the
// OpenMP backend, and verifies the two produce bitwise-identical results.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <vector>

#include "rowcol/array.hpp"
#include "rowcol/kernels.hpp"
#include "rowcol/parallel.hpp"
#include "rowcol/rng.hpp"

using namespace rowcol;

namespace {

Array random_array(std::size_t r, std::size_t c, Rng& rng) {
  Array a(r, c);
  for (double& x : a.data) x = rng.uniform(-1.0, 1.0);
  return a;
}

double time_ms(int reps, const Array& a, const Array& b,
               Array (*fn)(const Array&, const Array&), Array& out) {
  // Warm-up
  out = fn(a, b);
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) out = fn(a, b);
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

struct Case {
  const char* name;
  Array (*fn)(const Array&, const Array&);
  std::size_t m, k, n;  // a: m x k, result m x n
};

}  // namespace

int main() {
  Rng rng(42);
  const Case cases[] = {
      {"matmul_nn 2048x64 * 64x64", &matmul_nn, 2048, 64, 64},
      {"matmul_nt 2048x64 * (64x64)^T", &matmul_nt, 2048, 64, 64},
      {"matmul_tn (64x2048)^T * 64x... ", &matmul_tn, 2048, 64, 64},
      {"matmul_nn 512x512 * 512x512", &matmul_nn, 512, 512, 512},
      {"matmul_nt 512x512 * (512x512)^T", &matmul_nt, 512, 512, 512},
  };
  std::printf("%-34s %12s %12s %9s %8s\n", "kernel", "serial ms", "openmp ms",
              "speedup", "bitwise");
  for (const Case& c : cases) {
    Array a, b;
    switch (c.fn == &matmul_tn ? 1 : 0) {
      case 1:  // a is k x m for the transposed-left product
        a = random_array(c.k, c.m, rng);
        b = random_array(c.k, c.n, rng);
        break;
      default:
        a = random_array(c.m, c.k, rng);
        b = c.fn == &matmul_nt ? random_array(c.n, c.k, rng)
                               : random_array(c.k, c.n, rng);
        break;
    }
    const int reps = c.k >= 512 ? 3 : 20;
    Array out_serial, out_omp;
    par::set_backend(par::Backend::Serial);
    const double ms_serial = time_ms(reps, a, b, c.fn, out_serial);
    par::set_backend(par::Backend::OpenMP);
    const double ms_omp = time_ms(reps, a, b, c.fn, out_omp);
    const bool same =
        out_serial.size() == out_omp.size() &&
        std::memcmp(out_serial.data.data(), out_omp.data.data(),
                    out_serial.size() * sizeof(double)) == 0;
    std::printf("%-34s %12.3f %12.3f %8.2fx %8s\n", c.name, ms_serial, ms_omp,
                ms_serial / ms_omp, same ? "yes" : "NO");
    if (!same) return 1;
  }
  std::printf("\nthreads available: %d\n", par::max_threads());
  return 0;
}
