#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "rowcol/field.hpp"
#include "rowcol/vec3.hpp"

namespace rowcol {

// Boolean composition of signed distance fields, realized pointwise:
// intersection = max, union = min, difference(a,b) = max(a, -b).  The
// compositions are pseudo-SDFs (exact sign and zero set, distances only
// bounded), which is what the downstream refinement stage exists to fix.
enum class CsgOp { Intersect, Union, Difference };

class CsgField final : public SdfField {
 public:
  CsgField(CsgOp op, FieldPtr left, FieldPtr right);

  // Exactly the boolean formula of the child evaluations — composition
  // introduces no approximation.
  double eval(const Vec3& x) const override;
  void eval_batch(const std::vector<Vec3>& xs,
                  std::vector<double>& out) const override;
  // Gradient of the active branch (ties take the left child).
  Vec3 gradient(const Vec3& x) const override;

  CsgOp op() const { return op_; }
  const FieldPtr& left() const { return left_; }
  const FieldPtr& right() const { return right_; }

 private:
  CsgOp op_;
  FieldPtr left_, right_;
};

// `union` being a keyword, the constructors share a csg_ prefix instead.
FieldPtr csg_intersect(FieldPtr a, FieldPtr b);
FieldPtr csg_union(FieldPtr a, FieldPtr b);
FieldPtr csg_difference(FieldPtr a, FieldPtr b);

// Position of node i on an inclusive res-node lattice spanning [lo, hi]
// (node 0 at lo, node res-1 at hi).  Shared by grid sampling, grid
// interpolation, and iso-surface extraction so lattices always agree.
double grid_coord(double lo, double hi, std::size_t res, std::size_t i);

// Dense sampled field: trilinear interpolation inside the box; outside, the
// query is clamped to the box and the Euclidean distance to it is added
// (clamp-and-extend), which keeps far values growing like a distance.
class GridField final : public SdfField {
 public:
  // values in x-fastest order (index = i + res_x*(j + res_y*k)); each axis
  // needs >= 2 nodes and a strictly positive extent.  ConfigError otherwise.
  GridField(std::array<std::size_t, 3> res, const Aabb& box,
            std::vector<double> values);

  double eval(const Vec3& x) const override;
  void eval_batch(const std::vector<Vec3>& xs,
                  std::vector<double>& out) const override;

  const std::array<std::size_t, 3>& res() const { return res_; }
  const Aabb& bbox() const { return box_; }
  const std::vector<double>& values() const { return values_; }
  double node_value(std::size_t i, std::size_t j, std::size_t k) const {
    return values_[i + res_[0] * (j + res_[1] * k)];
  }

 private:
  std::array<std::size_t, 3> res_;
  Aabb box_;
  std::vector<double> values_;
};

// Evaluates `field` on the inclusive lattice (chunked; x-index fastest).
GridField sample_grid(const SdfField& field, std::array<std::size_t, 3> res,
                      const Aabb& box);

// Pointwise maximum of two grids on the same lattice (resolution and bounds
// must match exactly; ConfigError otherwise).
GridField grid_max(const GridField& a, const GridField& b);

// Grid snapshot file ("RCSD"): magic, u32 version=1, u32 res x3, bounding
// box as 6 little-endian f32 (min xyz, max xyz), then res_x*res_y*res_z
// little-endian f32 values, x-index fastest.  load(save(g)) is exact for
// f32-valued grids; malformed files raise IoError with the byte offset.
void save_grid(const std::string& path, const GridField& grid);
GridField load_grid(const std::string& path);

}  // namespace rowcol
