#pragma once

#include "rowcol/array.hpp"

namespace rowcol {

// Bias-corrected Adam state for one parameter array.
struct AdamState {
  Array m;  // first moment, parameter-shaped
  Array v;  // second moment, parameter-shaped
  long long t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

AdamState make_adam_state(std::size_t rows, std::size_t cols);

// One standard bias-corrected Adam step; increments state.t.
void adam_update(Array& param, const Array& grad, AdamState& state, double lr);

// base * 0.5 * (1 + cos(pi * iter / total)); valid for 0 <= iter <= total.
double cosine_lr(long long iter, long long total, double base);

}  // namespace rowcol
