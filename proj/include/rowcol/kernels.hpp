#pragma once

#include "rowcol/array.hpp"

namespace rowcol {

// Dense matrix products.  Every output row is computed entirely by one thread
// with a fixed-order inner loop, so results are bitwise identical between the
// serial and OpenMP backends and for any thread count.

// a: r x k, b: k x c  ->  r x c
Array matmul_nn(const Array& a, const Array& b);

// a: r x k, b: c x k  ->  r x c   (a * b^T; both operands row-contiguous)
Array matmul_nt(const Array& a, const Array& b);

// a: k x r, b: k x c  ->  r x c   (a^T * b)
Array matmul_tn(const Array& a, const Array& b);

// Unrolled dot product of two contiguous spans; fixed evaluation order.
double dot_span(const double* a, const double* b, std::size_t n);

}  // namespace rowcol
