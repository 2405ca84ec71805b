#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <vector>

#include "doctest.h"
#include "rowcol/errors.hpp"
#include "rowcol/kdtree.hpp"
#include "rowcol/pointcloud.hpp"
#include "rowcol/rng.hpp"

using namespace rowcol;

namespace {

std::vector<Vec3> random_points(std::size_t n, Rng& rng, double lo = -1.0,
                                double hi = 1.0) {
  std::vector<Vec3> pts(n);
  for (Vec3& p : pts) p = rng.uniform_vec3(Vec3{lo, lo, lo}, Vec3{hi, hi, hi});
  return pts;
}

// Independent oracle: full scan sorted by (squared distance, index).
std::vector<Neighbor> brute_knn(const std::vector<Vec3>& pts, const Vec3& q,
                                std::size_t k) {
  std::vector<std::pair<double, std::size_t>> all(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i)
    all[i] = {norm2(pts[i] - q), i};
  std::sort(all.begin(), all.end());
  std::vector<Neighbor> out(k);
  for (std::size_t i = 0; i < k; ++i)
    out[i] = Neighbor{all[i].second, std::sqrt(all[i].first)};
  return out;
}

double min_pairwise_dist(const std::vector<Vec3>& pts,
                         const std::vector<std::size_t>& idx) {
  double best = 1e300;
  for (std::size_t i = 0; i < idx.size(); ++i)
    for (std::size_t j = i + 1; j < idx.size(); ++j)
      best = std::min(best, norm(pts[idx[i]] - pts[idx[j]]));
  return best;
}

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name) : path("/tmp/rowcol_" + name) {}
  ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("normalize_to_cube maps a segment to +-margin") {
  std::vector<Vec3> raw = {{0, 0, 0}, {2, 0, 0}};
  auto [cloud, t] = normalize_to_cube(raw, 0.9);
  CHECK(cloud.points[0].x == doctest::Approx(-0.9).epsilon(1e-14));
  CHECK(cloud.points[1].x == doctest::Approx(0.9).epsilon(1e-14));
  CHECK(cloud.points[0].y == 0.0);
  CHECK(t.center.x == 1.0);
  CHECK(t.scale == doctest::Approx(1.0 / 0.9).epsilon(1e-14));
}

TEST_CASE("normalize_to_cube is the identity on a fitting symmetric cloud") {
  std::vector<Vec3> raw = {
      {-1, 0, 0}, {1, 0, 0}, {0, 0.5, -0.25}, {0, -0.5, 0.25}};
  auto [cloud, t] = normalize_to_cube(raw, 1.0);
  CHECK(t.scale == 1.0);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    CHECK(cloud.points[i].x == raw[i].x);
    CHECK(cloud.points[i].y == raw[i].y);
    CHECK(cloud.points[i].z == raw[i].z);
  }
}

TEST_CASE("normalize round trip reproduces the input") {
  Rng rng(41);
  std::vector<Vec3> raw = random_points(64, rng, 3.0, 17.0);
  auto [cloud, t] = normalize_to_cube(raw, 0.9);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const Vec3 back = t.invert(cloud.points[i]);
    for (int a = 0; a < 3; ++a) {
      CHECK(std::abs(back[a] - raw[i][a]) <=
            1e-12 * std::max(1.0, std::abs(raw[i][a])));
    }
    // Every normalized coordinate within the cube.
    for (int a = 0; a < 3; ++a) CHECK(std::abs(cloud.points[i][a]) <= 1.0);
  }
}

TEST_CASE("normalize rejects degenerate and misconfigured input") {
  std::vector<Vec3> same = {{1, 2, 3}, {1, 2, 3}, {1, 2, 3}};
  CHECK_THROWS_AS(normalize_to_cube(same, 0.9), NumericError);
  std::vector<Vec3> ok = {{0, 0, 0}, {1, 1, 1}};
  CHECK_THROWS_AS(normalize_to_cube(ok, 0.0), ConfigError);
  CHECK_THROWS_AS(normalize_to_cube(ok, 1.5), ConfigError);
  CHECK_THROWS_AS(normalize_to_cube({{1, 1, 1}}, 0.9), NumericError);
}

TEST_CASE("fps picks the far end of a collinear cloud") {
  PointCloud cloud;
  cloud.points = {{0, 0, 0}, {1, 0, 0}, {10, 0, 0}};
  auto idx = farthest_point_sampling(cloud, 2, 0, /*start=*/0);
  REQUIRE(idx.size() == 2);
  CHECK(idx[0] == 0);
  CHECK(idx[1] == 2);
}

TEST_CASE("fps with k = n returns every index") {
  PointCloud cloud;
  Rng rng(17);
  cloud.points = random_points(23, rng);
  auto idx = farthest_point_sampling(cloud, 23, 5);
  std::sort(idx.begin(), idx.end());
  for (std::size_t i = 0; i < idx.size(); ++i) CHECK(idx[i] == i);
}

TEST_CASE("fps on square corners picks the diagonal") {
  PointCloud cloud;
  cloud.points = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0}};
  auto idx = farthest_point_sampling(cloud, 2, 0, /*start=*/0);
  CHECK(idx[1] == 3);
}

TEST_CASE("fps rejects out-of-range k and is deterministic per seed") {
  PointCloud cloud;
  Rng rng(3);
  cloud.points = random_points(10, rng);
  CHECK_THROWS_AS(farthest_point_sampling(cloud, 11, 0), NumericError);
  CHECK_THROWS_AS(farthest_point_sampling(cloud, 0, 0), NumericError);
  auto a = farthest_point_sampling(cloud, 5, 42);
  auto b = farthest_point_sampling(cloud, 5, 42);
  CHECK(a == b);
}

TEST_CASE("fps subsets spread at least as well as random subsets") {
  Rng rng(1234);
  PointCloud cloud;
  cloud.points = random_points(200, rng);
  int wins = 0;
  const int trials = 100;
  const std::size_t k = 20;
  for (int trial = 0; trial < trials; ++trial) {
    auto fps = farthest_point_sampling(cloud, k, trial);
    // Random subset of the same size: seeded Fisher-Yates prefix.
    Rng shuffle_rng(10000 + trial);
    std::vector<std::size_t> perm(cloud.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t j =
          i + shuffle_rng.uniform_int(perm.size() - i);
      std::swap(perm[i], perm[j]);
    }
    perm.resize(k);
    if (min_pairwise_dist(cloud.points, fps) >=
        min_pairwise_dist(cloud.points, perm))
      ++wins;
  }
  CHECK(wins >= 95);
}

TEST_CASE("nearest_neighbor basics") {
  PointCloud cloud;
  cloud.points = {{0, 0, 0}, {1, 0, 0}};
  auto nn = nearest_neighbor(cloud, Vec3{0.4, 0, 0}, 1);
  CHECK(nn[0].first == 0);
  CHECK(nn[0].second == doctest::Approx(0.4).epsilon(1e-14));
  auto self = nearest_neighbor(cloud, Vec3{1, 0, 0}, 1);
  CHECK(self[0].first == 1);
  CHECK(self[0].second == 0.0);
  CHECK_THROWS_AS(nearest_neighbor(cloud, Vec3{0, 0, 0}, 3), NumericError);
  CHECK_THROWS_AS(nearest_neighbor(PointCloud{}, Vec3{0, 0, 0}, 1),
                  NumericError);
}

TEST_CASE("nearest_neighbor matches an independent scan at k=50") {
  Rng rng(77);
  PointCloud cloud;
  cloud.points = random_points(100, rng);
  const Vec3 q = rng.uniform_vec3(Vec3{-1, -1, -1}, Vec3{1, 1, 1});
  auto got = nearest_neighbor(cloud, q, 50);
  auto want = brute_knn(cloud.points, q, 50);
  for (std::size_t i = 0; i < 50; ++i) {
    CHECK(got[i].first == want[i].index);
    CHECK(got[i].second == want[i].dist);
  }
}

TEST_CASE("kd-tree equals brute force exactly on random clouds") {
  Rng rng(101);
  for (std::size_t n : {5, 60, 300}) {
    std::vector<Vec3> pts = random_points(n, rng);
    KdTree tree(pts);
    for (int qi = 0; qi < 40; ++qi) {
      const Vec3 q = rng.uniform_vec3(Vec3{-1.2, -1.2, -1.2}, Vec3{1.2, 1.2, 1.2});
      for (std::size_t k : {std::size_t(1), std::size_t(5), n}) {
        auto got = tree.knn(q, k);
        auto want = brute_knn(pts, q, k);
        REQUIRE(got.size() == want.size());
        for (std::size_t i = 0; i < got.size(); ++i) {
          CHECK(got[i].index == want[i].index);
          CHECK(got[i].dist == want[i].dist);
        }
      }
    }
  }
}

TEST_CASE("kd-tree breaks distance ties toward the lower index") {
  // Duplicated coordinates force exact ties.
  std::vector<Vec3> pts = {{1, 0, 0}, {0, 1, 0}, {1, 0, 0}, {0, 1, 0},
                           {0, 0, 0}, {1, 0, 0}};
  KdTree tree(pts);
  auto got = tree.knn(Vec3{0.9, 0.1, 0.0}, 4);
  auto want = brute_knn(pts, Vec3{0.9, 0.1, 0.0}, 4);
  for (std::size_t i = 0; i < got.size(); ++i) {
    CHECK(got[i].index == want[i].index);
    CHECK(got[i].dist == want[i].dist);
  }
  // The three copies of (1,0,0) must appear in index order.
  CHECK(got[0].index == 0);
  CHECK(got[1].index == 2);
  CHECK(got[2].index == 5);
}

TEST_CASE("query sigma uses the capped neighbor rank") {
  PointCloud cloud;
  for (int i = 0; i < 10; ++i)
    cloud.points.push_back(Vec3{static_cast<double>(i), 0, 0});
  // rank capped to |cloud|-1 = 9: for the end point that is the far end.
  auto sigma = query_sigmas(cloud, 50);
  CHECK(sigma[0] == doctest::Approx(9.0).epsilon(1e-14));
  CHECK(sigma[9] == doctest::Approx(9.0).epsilon(1e-14));
  CHECK(sigma[4] == doctest::Approx(5.0).epsilon(1e-14));  // max(|4-i|)
  // Explicit rank: 3rd nearest other point of the middle of a line.
  auto s3 = query_sigmas(cloud, 3);
  CHECK(s3[0] == doctest::Approx(3.0).epsilon(1e-14));
}

TEST_CASE("sample_training_queries counts and exact nearest pairing") {
  Rng rng(55);
  PointCloud cloud;
  cloud.points = random_points(100, rng);
  QuerySet qs = sample_training_queries(cloud, 20, 50, 500, 9001);
  CHECK(qs.n_gaussian == 2000);
  CHECK(qs.n_uniform == 500);
  REQUIRE(qs.samples.size() == 2500);
  for (const QuerySample& s : qs.samples) {
    auto want = brute_knn(cloud.points, s.query, 1);
    const Vec3& np = cloud.points[want[0].index];
    CHECK(s.nearest.x == np.x);
    CHECK(s.nearest.y == np.y);
    CHECK(s.nearest.z == np.z);
  }
}

TEST_CASE("sample_training_queries is deterministic per seed") {
  Rng rng(56);
  PointCloud cloud;
  cloud.points = random_points(30, rng);
  QuerySet a = sample_training_queries(cloud, 5, 10, 50, 7);
  QuerySet b = sample_training_queries(cloud, 5, 10, 50, 7);
  REQUIRE(a.samples.size() == b.samples.size());
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    CHECK(a.samples[i].query.x == b.samples[i].query.x);
    CHECK(a.samples[i].query.y == b.samples[i].query.y);
    CHECK(a.samples[i].query.z == b.samples[i].query.z);
  }
}

TEST_CASE("point cloud file round trip, comments, and error handling") {
  TempFile tf("cloud_test.xyz");
  Rng rng(66);
  PointCloud cloud;
  cloud.points = random_points(50, rng, -2.0, 2.0);
  write_point_cloud(tf.path, cloud);
  PointCloud back = read_point_cloud(tf.path);
  REQUIRE(back.size() == cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i)
    for (int a = 0; a < 3; ++a)
      CHECK(back.points[i][a] ==
            doctest::Approx(cloud.points[i][a]).epsilon(1e-7));

  {
    std::ofstream out(tf.path);
    out << "# a comment\n\n 0.5 0.25 -1\n#another\n1 2 3\n";
  }
  PointCloud commented = read_point_cloud(tf.path);
  REQUIRE(commented.size() == 2);
  CHECK(commented.points[0].x == 0.5);

  {
    std::ofstream out(tf.path);
    out << "1 2\n";
  }
  CHECK_THROWS_AS(read_point_cloud(tf.path), IoError);
  {
    std::ofstream out(tf.path);
    out << "1 2 3 4\n";
  }
  CHECK_THROWS_AS(read_point_cloud(tf.path), IoError);
  {
    std::ofstream out(tf.path);
    out << "nan 0 0\n";
  }
  CHECK_THROWS_AS(read_point_cloud(tf.path), IoError);
  {
    std::ofstream out(tf.path);
    out << "# only comments\n";
  }
  CHECK_THROWS_AS(read_point_cloud(tf.path), IoError);
  CHECK_THROWS_AS(read_point_cloud("/nonexistent/nowhere.xyz"), IoError);
}
