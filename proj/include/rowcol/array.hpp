#pragma once

#include <cstddef>
#include <vector>

namespace rowcol {

// Dense row-major matrix of doubles.  Rows usually index independent samples
// of a batch; columns are feature channels.
struct Array {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Array() = default;
  Array(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double* row(std::size_t i) { return data.data() + i * cols; }
  const double* row(std::size_t i) const { return data.data() + i * cols; }

  double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }
  bool same_shape(const Array& o) const {
    return rows == o.rows && cols == o.cols;
  }
};

}  // namespace rowcol
