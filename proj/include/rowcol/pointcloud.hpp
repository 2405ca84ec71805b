#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "rowcol/vec3.hpp"

namespace rowcol {

enum class ViewTag { Row, Column, Other };

struct PointCloud {
  std::vector<Vec3> points;
  ViewTag view_tag = ViewTag::Other;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

// Similarity transform between original units and the normalized cube.
// Forward: x' = (x - center) / scale.  scale is original units per
// normalized unit, so margin is already folded in.
struct NormTransform {
  Vec3 center{0.0, 0.0, 0.0};
  double scale = 1.0;

  Vec3 apply(const Vec3& x) const { return (x - center) / scale; }
  Vec3 invert(const Vec3& x) const { return x * scale + center; }
};

struct QuerySample {
  Vec3 query;
  Vec3 nearest;  // exact nearest cloud point to `query`
};

struct QuerySet {
  std::vector<QuerySample> samples;  // Gaussian block first, then uniform
  std::size_t n_gaussian = 0;
  std::size_t n_uniform = 0;
};

// Transform mapping `box` into [-margin, margin]^3 (longest axis touches
// the boundary).  Degenerate boxes (zero max half-extent) are an error.
NormTransform norm_transform_for_box(const Aabb& box, double margin);

PointCloud apply_norm(const std::vector<Vec3>& raw, const NormTransform& t,
                      ViewTag tag);

// Normalize one cloud into [-margin, margin]^3 about its own bounding box.
std::pair<PointCloud, NormTransform> normalize_to_cube(
    const std::vector<Vec3>& raw, double margin = 0.9);

// Greedy farthest point sampling: k indices, starting from a seeded random
// index (or start_override if given).  Deterministic per seed.
inline constexpr std::size_t kFpsSeededStart = static_cast<std::size_t>(-1);
std::vector<std::size_t> farthest_point_sampling(
    const PointCloud& cloud, std::size_t k, std::uint64_t seed,
    std::size_t start_override = kFpsSeededStart);

// Exact k nearest neighbors by brute-force scan, ascending (distance, index).
std::vector<std::pair<std::size_t, double>> nearest_neighbor(
    const PointCloud& cloud, const Vec3& query, std::size_t k);

// Per-point Gaussian bandwidths: sigma_i = distance from point i to its
// min(nn_rank, |cloud|-1)-th nearest other point.
std::vector<double> query_sigmas(const PointCloud& cloud, std::size_t nn_rank);

// Self-supervised query set: per cloud point, `per_point` Gaussian samples
// with per-point sigma from query_sigmas(), plus n_uniform samples uniform
// in [-1,1]^3; each query paired with its exact nearest cloud point.
QuerySet sample_training_queries(const PointCloud& cloud,
                                 std::size_t per_point, std::size_t nn_rank,
                                 std::size_t n_uniform, std::uint64_t seed);

// ASCII "x y z" per line; lines starting with '#' are comments.  The reader
// rejects NaN/Inf and malformed lines; empty clouds are an error.
PointCloud read_point_cloud(const std::string& path);
void write_point_cloud(const std::string& path, const PointCloud& cloud);

}  // namespace rowcol
