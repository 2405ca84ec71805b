#include "rowcol/optim.hpp"

#include <cmath>
#include <string>

#include "rowcol/errors.hpp"
#include "rowcol/parallel.hpp"

namespace rowcol {

AdamState make_adam_state(std::size_t rows, std::size_t cols) {
  AdamState s;
  s.m = Array(rows, cols, 0.0);
  s.v = Array(rows, cols, 0.0);
  return s;
}

void adam_update(Array& param, const Array& grad, AdamState& state, double lr) {
  if (!param.same_shape(grad) || !param.same_shape(state.m) ||
      !param.same_shape(state.v))
    throw NumericError("adam_update: parameter/gradient/state shape mismatch");
  if (!(lr > 0.0)) throw NumericError("adam_update: lr must be positive");
  state.t += 1;
  const double b1 = state.beta1;
  const double b2 = state.beta2;
  const double eps = state.eps;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  par::for_index(param.size(), [&](std::size_t e) {
    const double g = grad.data[e];
    const double m = b1 * state.m.data[e] + (1.0 - b1) * g;
    const double v = b2 * state.v.data[e] + (1.0 - b2) * (g * g);
    state.m.data[e] = m;
    state.v.data[e] = v;
    const double mhat = m / c1;
    const double vhat = v / c2;
    param.data[e] -= lr * mhat / (std::sqrt(vhat) + eps);
  });
}

double cosine_lr(long long iter, long long total, double base) {
  if (total <= 0)
    throw NumericError("cosine_lr: total must be positive, got " +
                       std::to_string(total));
  if (iter < 0 || iter > total)
    throw NumericError("cosine_lr: iteration " + std::to_string(iter) +
                       " outside [0, " + std::to_string(total) + "]");
  const double frac =
      static_cast<double>(iter) / static_cast<double>(total);
  return base * 0.5 * (1.0 + std::cos(M_PI * frac));
}

}  // namespace rowcol
