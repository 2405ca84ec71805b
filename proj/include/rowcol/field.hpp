#pragma once

#include <memory>
#include <vector>

#include "rowcol/vec3.hpp"

namespace rowcol {

// Scalar field over R^3 with the signed-distance convention: positive
// outside, zero on the surface, negative inside.  Implementations must be
// pure (immutable state) so evaluation is safe to call concurrently.
class SdfField {
 public:
  virtual ~SdfField() = default;

  virtual double eval(const Vec3& x) const = 0;

  // Batch evaluation into out[i] = eval(xs[i]).  The default loops over
  // eval(); implementations with a cheaper batched path override it.
  virtual void eval_batch(const std::vector<Vec3>& xs,
                          std::vector<double>& out) const;

  // Field gradient.  Default is central finite differences; fields with an
  // exact gradient (analytic shapes, networks via reverse mode) override.
  virtual Vec3 gradient(const Vec3& x) const;
};

using FieldPtr = std::shared_ptr<const SdfField>;

// Result of pulling a query point onto the zero level-set.  `valid` is false
// when the gradient was too small to give a direction (the caller should
// drop the sample rather than trust the point).
struct Projection {
  Vec3 point{0.0, 0.0, 0.0};
  bool valid = false;
};

inline constexpr double kProjectEpsGrad = 1e-8;

// x' = x - f(x) * g with g the gradient direction: unit-normalized by
// default (stable when |grad f| strays from 1), or the raw gradient when
// normalize_direction is false.  With normalization on, a gradient norm
// below eps_grad yields an invalid projection (skip-sample signal).
Projection project_to_surface(const SdfField& field, const Vec3& x,
                              bool normalize_direction = true,
                              double eps_grad = kProjectEpsGrad);

}  // namespace rowcol
