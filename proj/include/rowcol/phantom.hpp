#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "rowcol/field.hpp"
#include "rowcol/meshing.hpp"
#include "rowcol/pointcloud.hpp"
#include "rowcol/vec3.hpp"

namespace rowcol {

// Closed expression tree of analytic solids.  Primitives carry their payload
// inline; Union/Intersect/Difference carry exactly two children.
enum class ShapeKind {
  Sphere,     // center a, radius r — exact signed distance
  Ellipsoid,  // center a, semi-axes radii — lower-bound pseudo-SDF
              // rmin*(|(x-a)/radii| - 1); exact when the radii are equal
  Box,        // center a, half-extents radii — exact signed distance
  Capsule,    // segment a..b, radius r — exact signed distance
  Union,
  Intersect,
  Difference
};

struct ShapeSpec {
  ShapeKind kind = ShapeKind::Sphere;
  Vec3 a{0.0, 0.0, 0.0};      // center, or first capsule endpoint
  Vec3 b{0.0, 0.0, 0.0};      // second capsule endpoint
  Vec3 radii{0.0, 0.0, 0.0};  // ellipsoid semi-axes / box half-extents
  double r = 0.0;             // sphere / capsule radius
  std::vector<ShapeSpec> children;
};

// Structural validity: positive radii/extents, distinct capsule endpoints,
// finite payloads, two children per CSG node.  ConfigError otherwise.
void validate_shape(const ShapeSpec& spec);

// Expression-tree text syntax (whitespace-insensitive):
//   sphere(cx cy cz; r)            ellipsoid(cx cy cz; rx ry rz)
//   box(cx cy cz; hx hy hz)        capsule(ax ay az; bx by bz; r)
//   union(A, B) | intersect(A, B) | difference(A, B)
// format -> parse round-trips bitwise (%.17g); parse errors carry the
// offending character offset.
std::string format_shape(const ShapeSpec& spec);
ShapeSpec parse_shape(const std::string& text);
void save_shape(const std::string& path, const ShapeSpec& spec);
ShapeSpec load_shape(const std::string& path);

// Field of the expression tree: primitives as documented on ShapeKind, CSG
// nodes as pointwise min/max composition.  Validates the spec first.
FieldPtr analytic_field(const ShapeSpec& spec);

// Segment-Minkowski dilation along a unit direction: the pointwise minimum
// of `field` over `taps` equally spaced offsets in [-thickness/2,
// +thickness/2].  Odd tap counts include the zero offset, making the result
// a pointwise lower bound of the input.  thickness 0 returns `field`
// itself.  Models elevation smear: a sphere dilates into (a bead-chain
// approximation of) a capsule.
FieldPtr dilate_along(FieldPtr field, const Vec3& direction, double thickness,
                      std::size_t taps = 9);

// One sweep of a thick-slice scanner: direction is the scan-motion /
// elevation axis, slices are planes orthogonal to it at integer multiples
// of slice_spacing.
struct ScanSpec {
  Vec3 direction{1.0, 0.0, 0.0};  // unit
  double thickness = 0.0;         // elevation extent, normalized units, < 1
  double slice_spacing = 0.05;
  double noise_sigma = 0.0;       // isotropic Gaussian, after projection
  std::size_t n_points = 10000;
  std::uint64_t seed = 0;
};

void validate_scan_spec(const ScanSpec& spec);

// Surface points of the dilated solid, restricted to the slice planes:
// seeded in-plane candidates are pulled onto the field's zero level by
// iterated projection (x' = x - f * g_perp/|g_perp|, g_perp the in-plane
// gradient component) to |f| <= 1e-6, then jittered by noise_sigma.  Points
// are spread as evenly as possible over the planes that intersect the
// solid.  NumericError when no plane does (or a contour cannot be hit).
PointCloud simulate_scan(const ShapeSpec& gt, const ScanSpec& scan,
                         ViewTag tag = ViewTag::Other);

// Desk-scale ground-truth stand-ins, in normalized coordinates.
enum class PhantomName { SphereCap, EllipsoidPair, VertebraToy };

PhantomName parse_phantom_name(const std::string& name);
const char* phantom_name_string(PhantomName name);

struct Phantom {
  ShapeSpec spec;
  Mesh gt_mesh;  // 256^3 marching-cubes extraction over [-1,1]^3
};

// SphereCap: hemisphere (sphere cut by a box face) — exact-distance oracle.
// EllipsoidPair: two overlapping ellipsoids, a smooth nonconvex blob.
// VertebraToy: ellipsoid body, capsule spinous process, two capsule
// transverse processes; thin features are >= 4 voxels across at 256^3.
Phantom make_phantom(PhantomName name);

}  // namespace rowcol
