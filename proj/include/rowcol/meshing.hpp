#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "rowcol/csg.hpp"
#include "rowcol/field.hpp"
#include "rowcol/vec3.hpp"

namespace rowcol {

// Indexed triangle mesh.  Extraction guarantees: indices in range, no
// zero-area triangles, vertices inside the evaluation bounding box.
struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<std::size_t, 3>> triangles;
};

// Samples `field` on a res^3 inclusive lattice over `box` (x-index fastest)
// and rounds every node value to f32 precision, so the in-memory grid is
// bit-identical to its RCSD snapshot after a save/load round trip.
GridField evaluate_grid(const SdfField& field, std::size_t res,
                        const Aabb& box);

// Standard 256-case marching cubes with linear edge interpolation at
// `iso`.  Vertices are welded across cells (one vertex per crossed lattice
// edge, plus a patch-centroid vertex for the rare loops a fan cannot
// triangulate manifoldly), and ambiguous faces are resolved by a rule that
// depends only on the face's corner signs (separate the below-iso corners),
// so two cells always agree on their shared face and closed surfaces come
// out watertight.  Winding: right-hand-rule triangle normals point toward
// decreasing field values.  No crossings -> empty mesh.
Mesh marching_cubes(const GridField& grid, double iso = 0.0);

// Total surface area (sum of triangle areas).
double mesh_area(const Mesh& mesh);

// n points drawn area-weighted-uniformly over the surface: pick a triangle
// by cumulative area, then a uniform barycentric point (folded square).
// Deterministic per seed.  ConfigError on an empty or zero-area mesh.
std::vector<Vec3> sample_mesh_surface(const Mesh& mesh, std::size_t n,
                                      std::uint64_t seed);

// The four distances of the evaluation protocol plus the bookkeeping needed
// to audit them (sample counts, sampling seed, and which space the units
// live in: "normalized" cube coordinates or original units).
struct MetricReport {
  double cd = 0.0;    // symmetric chamfer: 0.5*(mean_a d(a,B) + mean_b d(b,A))
  double hd = 0.0;    // symmetric Hausdorff: max of both directional maxima
  double mad = 0.0;   // mean absolute distance, recon -> gt only
  double rmse = 0.0;  // sqrt(mean_a d(a,B)^2), recon -> gt only
  std::size_t n_samples = 0;  // recon-side point count
  std::size_t n_gt = 0;       // gt-side point count
  std::uint64_t seed = 0;     // seed used to sample the surfaces
  std::string space = "normalized";
};

// Exact nearest-neighbor distances (kd-tree, matches brute force bitwise)
// between the two point sets; A = recon, B = gt for the directional
// metrics.  ConfigError if either set is empty.
MetricReport compute_metrics(const std::vector<Vec3>& recon,
                             const std::vector<Vec3>& gt,
                             std::uint64_t seed = 0,
                             const std::string& space = "normalized");

// Human-readable block (stating the metric conventions) followed by a
// single machine-readable CSV line; the last line of the report is always
// `cd,hd,mad,rmse,n_samples,n_gt,seed,space` values in that order.
std::string format_metric_report(const MetricReport& report);
void write_metric_report(const std::string& path, const MetricReport& report);

// Wavefront OBJ subset: "v x y z" and "f i j k" (1-based) lines only.
// Loading rejects anything else; IoError carries the offending line number.
void save_mesh_obj(const std::string& path, const Mesh& mesh);
Mesh load_mesh_obj(const std::string& path);

}  // namespace rowcol
