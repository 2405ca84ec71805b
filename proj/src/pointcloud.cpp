#include "rowcol/pointcloud.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "rowcol/errors.hpp"
#include "rowcol/kdtree.hpp"
#include "rowcol/parallel.hpp"
#include "rowcol/rng.hpp"

namespace rowcol {

NormTransform norm_transform_for_box(const Aabb& box, double margin) {
  if (!(margin > 0.0 && margin <= 1.0))
    throw ConfigError("normalize: margin must be in (0, 1], got " +
                      std::to_string(margin));
  const Vec3 he = box.half_extent();
  const double s = std::max(he.x, std::max(he.y, he.z));
  if (!(s > 0.0))
    throw NumericError("normalize: degenerate input (zero extent)");
  NormTransform t;
  t.center = box.center();
  t.scale = s / margin;
  return t;
}

PointCloud apply_norm(const std::vector<Vec3>& raw, const NormTransform& t,
                      ViewTag tag) {
  PointCloud out;
  out.view_tag = tag;
  out.points.resize(raw.size());
  par::for_index(raw.size(),
                 [&](std::size_t i) { out.points[i] = t.apply(raw[i]); });
  return out;
}

std::pair<PointCloud, NormTransform> normalize_to_cube(
    const std::vector<Vec3>& raw, double margin) {
  if (raw.size() < 2)
    throw NumericError("normalize: need at least 2 points, got " +
                       std::to_string(raw.size()));
  Aabb box;
  for (const Vec3& p : raw) box.expand(p);
  NormTransform t = norm_transform_for_box(box, margin);
  return {apply_norm(raw, t, ViewTag::Other), t};
}

std::vector<std::size_t> farthest_point_sampling(const PointCloud& cloud,
                                                 std::size_t k,
                                                 std::uint64_t seed,
                                                 std::size_t start_override) {
  const std::size_t n = cloud.size();
  if (k < 1 || k > n)
    throw NumericError("farthest_point_sampling: k=" + std::to_string(k) +
                       " outside [1, " + std::to_string(n) + "]");
  std::size_t start = start_override;
  if (start == kFpsSeededStart) {
    Rng rng(seed);
    start = static_cast<std::size_t>(rng.uniform_int(n));
  } else if (start >= n) {
    throw NumericError("farthest_point_sampling: start index out of range");
  }

  std::vector<std::size_t> chosen;
  chosen.reserve(k);
  chosen.push_back(start);
  std::vector<double> mind2(n);
  par::for_index(n, [&](std::size_t i) {
    mind2[i] = norm2(cloud.points[i] - cloud.points[start]);
  });
  while (chosen.size() < k) {
    const std::size_t last = chosen.back();
    par::for_index(n, [&](std::size_t i) {
      const double d2 = norm2(cloud.points[i] - cloud.points[last]);
      if (d2 < mind2[i]) mind2[i] = d2;
    });
    // Serial argmax: farthest first, ties to the lower index.
    std::size_t best = 0;
    double bestd = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (mind2[i] > bestd) {
        bestd = mind2[i];
        best = i;
      }
    }
    chosen.push_back(best);
  }
  return chosen;
}

std::vector<std::pair<std::size_t, double>> nearest_neighbor(
    const PointCloud& cloud, const Vec3& query, std::size_t k) {
  const std::size_t n = cloud.size();
  if (n == 0) throw NumericError("nearest_neighbor: empty cloud");
  if (k < 1 || k > n)
    throw NumericError("nearest_neighbor: k=" + std::to_string(k) +
                       " outside [1, " + std::to_string(n) + "]");
  std::vector<std::pair<double, std::size_t>> all(n);
  for (std::size_t i = 0; i < n; ++i)
    all[i] = {norm2(cloud.points[i] - query), i};
  std::sort(all.begin(), all.end());
  std::vector<std::pair<std::size_t, double>> out(k);
  for (std::size_t i = 0; i < k; ++i)
    out[i] = {all[i].second, std::sqrt(all[i].first)};
  return out;
}

std::vector<double> query_sigmas(const PointCloud& cloud,
                                 std::size_t nn_rank) {
  const std::size_t n = cloud.size();
  if (n < 2) throw NumericError("query_sigmas: need at least 2 points");
  if (nn_rank < 1) throw NumericError("query_sigmas: nn_rank must be >= 1");
  KdTree tree(cloud.points);
  // Distance to the rank-th nearest other point (the self match at
  // distance 0 occupies the first slot of the kNN list).
  const std::size_t rank = std::min(nn_rank, n - 1);
  std::vector<double> sigma(n);
  par::for_index(n, [&](std::size_t i) {
    sigma[i] = tree.knn(cloud.points[i], rank + 1).back().dist;
  });
  return sigma;
}

QuerySet sample_training_queries(const PointCloud& cloud,
                                 std::size_t per_point, std::size_t nn_rank,
                                 std::size_t n_uniform, std::uint64_t seed) {
  const std::size_t n = cloud.size();
  if (n < 2)
    throw NumericError("sample_training_queries: need at least 2 points");

  const std::vector<double> sigma = query_sigmas(cloud, nn_rank);
  KdTree tree(cloud.points);

  QuerySet qs;
  qs.n_gaussian = n * per_point;
  qs.n_uniform = n_uniform;
  qs.samples.resize(qs.n_gaussian + qs.n_uniform);

  // Draws come from one serial stream so the set is a pure function of the
  // seed; nearest-neighbor pairing below is parallel and pure.
  Rng rng(seed);
  std::size_t w = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < per_point; ++j)
      qs.samples[w++].query = cloud.points[i] + rng.normal_vec3(sigma[i]);
  }
  const Vec3 lo{-1.0, -1.0, -1.0};
  const Vec3 hi{1.0, 1.0, 1.0};
  for (std::size_t j = 0; j < n_uniform; ++j)
    qs.samples[w++].query = rng.uniform_vec3(lo, hi);

  par::for_index(qs.samples.size(), [&](std::size_t s) {
    qs.samples[s].nearest = cloud.points[tree.nearest(qs.samples[s].query).index];
  });
  return qs;
}

PointCloud read_point_cloud(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open point cloud file: " + path);
  PointCloud cloud;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::size_t first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;  // blank
    if (line[first] == '#') continue;          // comment
    std::istringstream ss(line);
    Vec3 p;
    std::string extra;
    if (!(ss >> p.x >> p.y >> p.z) || (ss >> extra))
      throw IoError(path + ":" + std::to_string(lineno) +
                    ": expected three coordinates per line");
    if (!finite(p))
      throw IoError(path + ":" + std::to_string(lineno) +
                    ": non-finite coordinate");
    cloud.points.push_back(p);
  }
  if (cloud.points.empty())
    throw IoError("point cloud file has no points: " + path);
  return cloud;
}

void write_point_cloud(const std::string& path, const PointCloud& cloud) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw IoError("cannot write point cloud file: " + path);
  for (const Vec3& p : cloud.points)
    std::fprintf(f, "%.9g %.9g %.9g\n", p.x, p.y, p.z);
  if (std::fclose(f) != 0) throw IoError("write failed: " + path);
}

}  // namespace rowcol
