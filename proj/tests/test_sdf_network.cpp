#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "rowcol/errors.hpp"
#include "rowcol/field.hpp"
#include "rowcol/rng.hpp"
#include "rowcol/sdf_network.hpp"

using namespace rowcol;

namespace {

// Straight-line forward pass written independently of the library kernels.
// Doubles as the evaluation oracle and as a kink guard: min_preact receives
// the smallest |pre-activation| seen, so finite-difference probes can reject
// points that sit too close to a ReLU kink.
double naive_eval(const Network& net, const Vec3& p, double* min_preact = nullptr) {
  std::vector<double> h = {p.x, p.y, p.z};
  double guard = 1e300;
  const std::size_t L = net.arch.n_layers;
  for (std::size_t l = 0; l < L; ++l) {
    const Array& w = net.weights[l];
    const Array& b = net.biases[l];
    std::vector<double> z(w.rows);
    for (std::size_t i = 0; i < w.rows; ++i) {
      double s = 0.0;
      for (std::size_t k = 0; k < w.cols; ++k) s += h[k] * w.at(i, k);
      s += b.data[i];
      if (l + 1 < L) {
        guard = std::min(guard, std::fabs(s));
        s = s > 0.0 ? s : 0.0;
      }
      z[i] = s;
    }
    if (l + 1 == net.arch.skip_at) {
      z.push_back(p.x);
      z.push_back(p.y);
      z.push_back(p.z);
    }
    h = std::move(z);
  }
  if (min_preact) *min_preact = guard;
  return h[0];
}

// n_layers=2, hidden=4, skip_at=1: layer 1 emits a single ReLU channel, the
// concat restores [relu, x, y, z], layer 2 is linear.
Network tiny_net() {
  NetworkArch arch{2, 4, 1};
  Network net = init_network(arch, 0, NetRole::RowView);
  return net;
}

// f(x) = relu(x1) - 0.5
Network handset_relu_net() {
  Network net = tiny_net();
  net.weights[0].data = {1.0, 0.0, 0.0};
  net.biases[0].data = {0.0};
  net.weights[1].data = {1.0, 0.0, 0.0, 0.0};
  net.biases[1].data = {-0.5};
  return net;
}

// f(x) = 2 x1 + 3 x2, realized purely through the skip branch.
Network handset_linear_net() {
  Network net = tiny_net();
  net.weights[0].data = {0.0, 0.0, 0.0};
  net.biases[0].data = {0.0};
  net.weights[1].data = {0.0, 2.0, 3.0, 0.0};
  net.biases[1].data = {0.0};
  return net;
}

struct UnitSphereField final : SdfField {
  double eval(const Vec3& x) const override { return norm(x) - 1.0; }
  Vec3 gradient(const Vec3& x) const override { return normalized(x); }
};

struct PlaneField final : SdfField {
  double eval(const Vec3& x) const override { return x.z; }
  Vec3 gradient(const Vec3&) const override { return Vec3{0, 0, 1}; }
};

struct ConstantField final : SdfField {
  double eval(const Vec3&) const override { return 1.0; }
  Vec3 gradient(const Vec3&) const override { return Vec3{0, 0, 0}; }
};

// Exercises the default finite-difference gradient (no override).
struct QuadraticField final : SdfField {
  double eval(const Vec3& x) const override {
    return x.x * x.x + 2.0 * x.y * x.y - 0.7;
  }
};

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name) : path("/tmp/rowcol_" + name) {}
  ~TempFile() { std::remove(path.c_str()); }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("validate_arch rejects malformed architectures") {
  CHECK_THROWS_AS(validate_arch(NetworkArch{1, 64, 1}), ConfigError);
  CHECK_THROWS_AS(validate_arch(NetworkArch{4, 64, 0}), ConfigError);
  CHECK_THROWS_AS(validate_arch(NetworkArch{4, 64, 4}), ConfigError);
  CHECK_THROWS_AS(validate_arch(NetworkArch{4, 64, 5}), ConfigError);
  CHECK_THROWS_AS(validate_arch(NetworkArch{4, 3, 1}), ConfigError);
  CHECK_NOTHROW(validate_arch(NetworkArch{2, 4, 1}));
  CHECK_NOTHROW(validate_arch(NetworkArch{8, 256, 4}));
}

TEST_CASE("layer widths follow the skip-connection shape rule") {
  NetworkArch arch{8, 256, 4};
  CHECK(layer_in_width(arch, 0) == 3);
  CHECK(layer_out_width(arch, 0) == 256);
  CHECK(layer_out_width(arch, 3) == 253);  // skip layer, 1-based layer 4
  CHECK(layer_in_width(arch, 4) == 256);   // concat restored the width
  CHECK(layer_out_width(arch, 7) == 1);
  // Full-width consistency: every layer's input matches what feeds it.
  Network net = init_network(arch, 7, NetRole::RowView);
  for (std::size_t l = 0; l < arch.n_layers; ++l) {
    CHECK(net.weights[l].rows == layer_out_width(arch, l));
    CHECK(net.weights[l].cols == layer_in_width(arch, l));
    CHECK(net.biases[l].cols == layer_out_width(arch, l));
  }
}

TEST_CASE("hand-set net computes relu(x1) - 0.5 exactly") {
  Network net = handset_relu_net();
  CHECK(eval_sdf(net, {1, 0, 0}) == 0.5);
  CHECK(eval_sdf(net, {-1, 0, 0}) == -0.5);  // dead ReLU branch
  CHECK(eval_sdf(net, {0.25, 9.0, -3.0}) == -0.25);
}

TEST_CASE("hand-set linear net has constant spatial gradient (2,3,0)") {
  Network net = handset_linear_net();
  for (const Vec3& p : {Vec3{0, 0, 0}, Vec3{1, -2, 3}, Vec3{-0.5, 0.25, 8}}) {
    CHECK(eval_sdf(net, p) == doctest::Approx(2 * p.x + 3 * p.y).epsilon(1e-15));
    const Vec3 g = spatial_gradient(net, p);
    CHECK(g.x == 2.0);
    CHECK(g.y == 3.0);
    CHECK(g.z == 0.0);
  }
}

TEST_CASE("geometric init approximates a sphere of radius 0.5") {
  for (const NetworkArch arch : {NetworkArch{4, 64, 2}, NetworkArch{8, 256, 4}}) {
    for (std::uint64_t seed : {1ull, 2ull, 3ull, 4ull, 5ull}) {
      CAPTURE(arch.n_layers);
      CAPTURE(seed);
      Network net = init_network(arch, seed, NetRole::RowView);
      // All hidden activations vanish at the origin, so f(0) is the output
      // bias exactly.
      CHECK(eval_sdf(net, {0, 0, 0}) == -0.5);
      CHECK(eval_sdf(net, {0.9, 0.9, 0.9}) > 0.0);
      // Near-sphere gradient: within 15 degrees of radially outward.
      const Vec3 g = spatial_gradient(net, {0.8, 0, 0});
      const double cosang = g.x / norm(g);
      CHECK(cosang > std::cos(15.0 * M_PI / 180.0));
    }
  }
}

TEST_CASE("init is deterministic per seed and finite on [-2,2]^3") {
  NetworkArch arch{4, 64, 2};
  Network a = init_network(arch, 42, NetRole::ColView);
  Network b = init_network(arch, 42, NetRole::ColView);
  Network c = init_network(arch, 43, NetRole::ColView);
  bool identical = true;
  bool differs = false;
  for (std::size_t l = 0; l < arch.n_layers; ++l) {
    identical = identical && a.weights[l].data == b.weights[l].data &&
                a.biases[l].data == b.biases[l].data;
    differs = differs || a.weights[l].data != c.weights[l].data;
  }
  CHECK(identical);
  CHECK(differs);

  std::vector<Vec3> grid;
  for (int i = 0; i <= 8; ++i)
    for (int j = 0; j <= 8; ++j)
      for (int k = 0; k <= 8; ++k)
        grid.push_back(Vec3{-2.0 + 0.5 * i, -2.0 + 0.5 * j, -2.0 + 0.5 * k});
  for (double v : eval_sdf_batch(a, grid)) CHECK(std::isfinite(v));
}

TEST_CASE("batch evaluation is bitwise equal to single evaluations") {
  // 20k points crosses the internal chunk boundary.
  Network net = init_network(NetworkArch{3, 8, 1}, 11, NetRole::RowView);
  Rng rng(99);
  std::vector<Vec3> pts;
  for (int i = 0; i < 20000; ++i)
    pts.push_back(rng.uniform_vec3({-1.5, -1.5, -1.5}, {1.5, 1.5, 1.5}));
  const std::vector<double> batch = eval_sdf_batch(net, pts);
  for (std::size_t i = 0; i < pts.size(); i += 997)
    CHECK(batch[i] == eval_sdf(net, pts[i]));
  // And against the independent naive forward (tolerance, not bitwise: the
  // oracle uses its own loop shapes).
  for (std::size_t i = 0; i < pts.size(); i += 2003)
    CHECK(batch[i] == doctest::Approx(naive_eval(net, pts[i])).epsilon(1e-12));
}

TEST_CASE("spatial_gradient matches central finite differences") {
  // A genuinely random net (not the geometric init, whose dormant channels
  // sit exactly on the ReLU kink where finite differences are meaningless).
  Network net = init_network(NetworkArch{4, 32, 2}, 137, NetRole::RowView);
  Rng wrng(7001);
  for (std::size_t l = 0; l < net.arch.n_layers; ++l) {
    const double s = 1.0 / std::sqrt(static_cast<double>(net.weights[l].cols));
    for (double& w : net.weights[l].data) w = wrng.normal(0.0, s);
    for (double& b : net.biases[l].data) b = wrng.normal(0.0, 0.2);
  }
  Rng rng(555);
  const double h = 1e-5;
  int checked = 0;
  for (int trial = 0; trial < 40 && checked < 12; ++trial) {
    const Vec3 p = rng.uniform_vec3({-1, -1, -1}, {1, 1, 1});
    double guard = 0.0;
    naive_eval(net, p, &guard);
    if (guard < 1e-3) continue;  // too close to a ReLU kink for FD
    const Vec3 g = spatial_gradient(net, p);
    for (int a = 0; a < 3; ++a) {
      Vec3 lo = p, hi = p;
      lo[a] -= h;
      hi[a] += h;
      const double fd = (eval_sdf(net, hi) - eval_sdf(net, lo)) / (2 * h);
      const double rel = std::fabs(g[a] - fd) / std::max(1.0, std::fabs(fd));
      CHECK(rel < 1e-6);
    }
    ++checked;
  }
  REQUIRE(checked >= 12);
}

TEST_CASE("NetworkField adapter matches the free functions bitwise") {
  Network net = init_network(NetworkArch{4, 16, 2}, 4242, NetRole::Refined);
  NetworkField field(net);
  std::vector<Vec3> pts = {{0.1, 0.2, 0.3}, {-0.9, 0.4, 0}, {1.1, -1.2, 0.7}};
  std::vector<double> out;
  field.eval_batch(pts, out);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    CHECK(field.eval(pts[i]) == eval_sdf(net, pts[i]));
    CHECK(out[i] == eval_sdf(net, pts[i]));
    const Vec3 g1 = field.gradient(pts[i]);
    const Vec3 g2 = spatial_gradient(net, pts[i]);
    CHECK(g1.x == g2.x);
    CHECK(g1.y == g2.y);
    CHECK(g1.z == g2.z);
  }
}

TEST_CASE("project_to_surface on analytic fields") {
  UnitSphereField sphere;

  SUBCASE("outside point lands on the sphere") {
    const Projection p = project_to_surface(sphere, {2, 0, 0});
    REQUIRE(p.valid);
    CHECK(p.point.x == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(p.point.y == 0.0);
    CHECK(p.point.z == 0.0);
  }
  SUBCASE("inside point is pushed outward") {
    const Projection p = project_to_surface(sphere, {0.5, 0, 0});
    REQUIRE(p.valid);
    CHECK(p.point.x == doctest::Approx(1.0).epsilon(1e-15));
  }
  SUBCASE("surface point stays put") {
    const Projection p = project_to_surface(sphere, {0, 1, 0});
    REQUIRE(p.valid);
    CHECK(p.point.y == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(p.point.x == 0.0);
  }
  SUBCASE("plane projection is exact") {
    PlaneField plane;
    const Projection p = project_to_surface(plane, {0.3, 0.2, 0.7});
    REQUIRE(p.valid);
    CHECK(p.point.x == 0.3);
    CHECK(p.point.y == 0.2);
    CHECK(p.point.z == doctest::Approx(0.0).epsilon(1e-15));
  }
  SUBCASE("degenerate gradient is a skip signal under normalization") {
    ConstantField flat;
    CHECK_FALSE(project_to_surface(flat, {0, 0, 0}).valid);
    // Raw-gradient mode has no norm precondition; zero gradient moves nothing.
    const Projection raw = project_to_surface(flat, {0, 0, 0}, false);
    CHECK(raw.valid);
    CHECK(raw.point.x == 0.0);
  }
}

TEST_CASE("default field gradient falls back to finite differences") {
  QuadraticField q;
  const Vec3 g = q.gradient({0.3, -0.4, 0.9});
  CHECK(g.x == doctest::Approx(0.6).epsilon(1e-8));
  CHECK(g.y == doctest::Approx(-1.6).epsilon(1e-8));
  CHECK(g.z == doctest::Approx(0.0).epsilon(1e-8));
}

TEST_CASE("network snapshot round-trips losslessly at f32") {
  TempFile tmp("net_snapshot.bin");
  Network net = init_network(NetworkArch{4, 16, 2}, 2024, NetRole::ColView);
  save_network(tmp.path, net);
  Network back = load_network(tmp.path);

  CHECK(back.arch.n_layers == net.arch.n_layers);
  CHECK(back.arch.hidden == net.arch.hidden);
  CHECK(back.arch.skip_at == net.arch.skip_at);
  CHECK(back.role == NetRole::ColView);
  CHECK(back.seed == 2024);
  for (std::size_t l = 0; l < net.arch.n_layers; ++l) {
    REQUIRE(back.weights[l].data.size() == net.weights[l].data.size());
    for (std::size_t e = 0; e < net.weights[l].size(); ++e) {
      CHECK(static_cast<float>(back.weights[l].data[e]) ==
            static_cast<float>(net.weights[l].data[e]));
    }
  }

  // A second save of the loaded net reproduces the file byte for byte.
  TempFile tmp2("net_snapshot2.bin");
  save_network(tmp2.path, back);
  CHECK(slurp(tmp.path) == slurp(tmp2.path));
}

TEST_CASE("snapshot loader rejects malformed files") {
  TempFile tmp("net_bad.bin");
  Network net = init_network(NetworkArch{2, 4, 1}, 5, NetRole::RowView);
  save_network(tmp.path, net);
  const std::string good = slurp(tmp.path);

  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_network("/tmp/rowcol_no_such_net.bin"), IoError);
  }
  SUBCASE("bad magic") {
    std::ofstream(tmp.path, std::ios::binary) << "not-a-net 1\n";
    CHECK_THROWS_AS(load_network(tmp.path), IoError);
  }
  SUBCASE("truncated blob reports the byte offset") {
    std::ofstream(tmp.path, std::ios::binary)
        << good.substr(0, good.size() - 3);
    try {
      load_network(tmp.path);
      FAIL("expected IoError");
    } catch (const IoError& e) {
      CHECK(std::string(e.what()).find("offset") != std::string::npos);
    }
  }
  SUBCASE("trailing bytes are an error") {
    std::ofstream(tmp.path, std::ios::binary) << good << "xx";
    CHECK_THROWS_AS(load_network(tmp.path), IoError);
  }
  SUBCASE("invalid architecture in header") {
    std::ofstream(tmp.path, std::ios::binary)
        << "rowcol-net 1\nrole row\nseed 0\narch 2 4 9\nblob\n";
    CHECK_THROWS_AS(load_network(tmp.path), IoError);
  }
}

TEST_CASE("role names round-trip and reject unknowns") {
  CHECK(net_role_from_name("row") == NetRole::RowView);
  CHECK(net_role_from_name("col") == NetRole::ColView);
  CHECK(net_role_from_name("refined") == NetRole::Refined);
  CHECK(std::string(net_role_name(NetRole::Refined)) == "refined");
  CHECK_THROWS_AS(net_role_from_name("diag"), ConfigError);
}
