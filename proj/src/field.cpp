#include "rowcol/field.hpp"

#include <cmath>

#include "rowcol/parallel.hpp"

namespace rowcol {

void SdfField::eval_batch(const std::vector<Vec3>& xs,
                          std::vector<double>& out) const {
  out.resize(xs.size());
  par::for_index(xs.size(), [&](std::size_t i) { out[i] = eval(xs[i]); });
}

Vec3 SdfField::gradient(const Vec3& x) const {
  constexpr double h = 1e-5;
  Vec3 g;
  for (int a = 0; a < 3; ++a) {
    Vec3 lo = x, hi = x;
    lo[a] -= h;
    hi[a] += h;
    g[a] = (eval(hi) - eval(lo)) / (2.0 * h);
  }
  return g;
}

Projection project_to_surface(const SdfField& field, const Vec3& x,
                              bool normalize_direction, double eps_grad) {
  const double f = field.eval(x);
  Vec3 g = field.gradient(x);
  if (normalize_direction) {
    const double n = norm(g);
    if (n < eps_grad) return Projection{x, false};
    g = g / n;
  }
  return Projection{x - g * f, true};
}

}  // namespace rowcol
