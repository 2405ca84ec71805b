#include "rowcol/kernels.hpp"

#include <string>

#include "rowcol/errors.hpp"
#include "rowcol/parallel.hpp"

namespace rowcol {

namespace {

[[noreturn]] void shape_fail(const char* what, const Array& a, const Array& b) {
  throw NumericError(std::string(what) + ": shape mismatch " +
                     std::to_string(a.rows) + "x" + std::to_string(a.cols) +
                     " vs " + std::to_string(b.rows) + "x" +
                     std::to_string(b.cols));
}

}  // namespace

double dot_span(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  double s = (s0 + s1) + (s2 + s3);
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

namespace {

// Shared row-accumulation product body: c (r x n) += a (r x k) * b (k x n).
// Each output row is owned by one thread; contributions arrive in fixed
// ascending-k order, so the result is independent of the thread count.
void nn_into(const Array& a, const Array& b, Array& c) {
  par::for_index(a.rows, [&](std::size_t i) {
    double* ci = c.row(i);
    const double* ai = a.row(i);
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = ai[k];
      const double* bk = b.row(k);
      for (std::size_t j = 0; j < b.cols; ++j) ci[j] += aik * bk[j];
    }
  });
}

Array transpose(const Array& a) {
  Array t(a.cols, a.rows);
  par::for_index(a.cols, [&](std::size_t i) {
    double* ti = t.row(i);
    for (std::size_t j = 0; j < a.rows; ++j) ti[j] = a.at(j, i);
  });
  return t;
}

}  // namespace

Array matmul_nn(const Array& a, const Array& b) {
  if (a.cols != b.rows) shape_fail("matmul_nn", a, b);
  Array c(a.rows, b.cols);
  nn_into(a, b, c);
  return c;
}

Array matmul_nt(const Array& a, const Array& b) {
  if (a.cols != b.cols) shape_fail("matmul_nt", a, b);
  // Transposing b up front keeps the inner loop contiguous (vectorizable);
  // the copy is negligible next to the product itself.
  Array bt = transpose(b);
  Array c(a.rows, b.rows);
  nn_into(a, bt, c);
  return c;
}

Array matmul_tn(const Array& a, const Array& b) {
  if (a.rows != b.rows) shape_fail("matmul_tn", a, b);
  Array c(a.cols, b.cols);
  par::for_index(a.cols, [&](std::size_t i) {
    double* ci = c.row(i);
    for (std::size_t k = 0; k < a.rows; ++k) {
      const double aki = a.at(k, i);
      const double* bk = b.row(k);
      for (std::size_t j = 0; j < b.cols; ++j) ci[j] += aki * bk[j];
    }
  });
  return c;
}

}  // namespace rowcol
