#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "rowcol/errors.hpp"
#include "rowcol/field.hpp"
#include "rowcol/optim.hpp"
#include "rowcol/refine.hpp"
#include "rowcol/rng.hpp"
#include "rowcol/stats.hpp"

using namespace rowcol;

namespace {

struct ConstF final : SdfField {
  double v;
  explicit ConstF(double v) : v(v) {}
  double eval(const Vec3&) const override { return v; }
};

struct SphereF final : SdfField {
  Vec3 c;
  double r;
  SphereF(const Vec3& c, double r) : c(c), r(r) {}
  double eval(const Vec3& x) const override { return norm(x - c) - r; }
};

RefineConfig small_sampling_config(std::size_t n_uniform,
                                   std::size_t n_surface,
                                   std::uint64_t seed) {
  RefineConfig c;
  c.n_uniform = n_uniform;
  c.n_surface = n_surface;
  c.seed = seed;
  return c;
}

// A handful of deliberately scattered training pairs for the small
// training-loop tests; targets are sphere distances.
std::vector<RefineSample> toy_samples(std::size_t n, std::uint64_t seed) {
  const SphereF sphere({0, 0, 0}, 0.6);
  Rng rng(seed);
  std::vector<RefineSample> out(n);
  for (auto& s : out) {
    s.x = rng.uniform_vec3({-1, -1, -1}, {1, 1, 1});
    s.target = sphere.eval(s.x);
    s.near_surface = std::fabs(s.target) < 0.1;
  }
  return out;
}

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

void spit(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  REQUIRE(out.good());
}

template <typename F>
std::string io_error_message(F&& f) {
  try {
    f();
  } catch (const IoError& e) {
    return e.what();
  }
  return {};
}

// Rounds through f32 with a volatile stop: at -O3 the vectorizer is not
// allowed to fold the narrowing away (gcc 11 does exactly that otherwise).
double f32_round(double v) {
  volatile float f = static_cast<float>(v);
  return static_cast<double>(f);
}

bool same_weights(const Network& a, const Network& b) {
  for (std::size_t l = 0; l < a.arch.n_layers; ++l) {
    for (std::size_t e = 0; e < a.weights[l].size(); ++e)
      if (a.weights[l].data[e] != b.weights[l].data[e]) return false;
    for (std::size_t e = 0; e < a.biases[l].size(); ++e)
      if (a.biases[l].data[e] != b.biases[l].data[e]) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("refine config validation") {
  RefineConfig good;
  CHECK_NOTHROW(validate_refine_config(good));

  RefineConfig c = good;
  c.n_uniform = 0;
  CHECK_THROWS_AS(validate_refine_config(c), ConfigError);
  c = good;
  c.n_surface = 0;
  CHECK_THROWS_AS(validate_refine_config(c), ConfigError);
  c = good;
  c.sigma_refine = 0.0;
  CHECK_THROWS_AS(validate_refine_config(c), ConfigError);
  c = good;
  c.tau_surf = -0.01;
  CHECK_THROWS_AS(validate_refine_config(c), ConfigError);
  c = good;
  c.lambda_mfd = -0.1;
  CHECK_THROWS_AS(validate_refine_config(c), ConfigError);
  c = good;
  c.iterations = 0;
  CHECK_THROWS_AS(validate_refine_config(c), ConfigError);
  c = good;
  c.batch = 0;
  CHECK_THROWS_AS(validate_refine_config(c), ConfigError);
  c = good;
  c.base_lr = 0.0;
  CHECK_THROWS_AS(validate_refine_config(c), ConfigError);
}

TEST_CASE("loss_supervised matches the hand formula") {
  // Perfect prediction off the surface: no loss at all.
  CHECK(loss_supervised(0.2, 0.2, false, 0.6, 0.01) == 0.0);
  // Near-surface with |target| <= tau: L1 plus the manifold term.
  CHECK(loss_supervised(0.05, 0.0, true, 0.6, 0.01) == 0.05 + 0.6 * 0.05);
  CHECK(loss_supervised(0.05, 0.0, true, 0.6, 0.01) == doctest::Approx(0.08));
  // Off-surface is pure L1.
  CHECK(loss_supervised(-0.1, 0.1, false, 0.6, 0.01) == 0.2);
  // The gate needs both the flag and a small enough |target|.
  CHECK(loss_supervised(0.05, 0.02, true, 0.6, 0.01) == std::fabs(0.05 - 0.02));
  CHECK(loss_supervised(0.05, 0.0, false, 0.6, 0.01) == 0.05);
  // lambda_mfd = 0 reduces to pure L1 regression.
  CHECK(loss_supervised(0.05, 0.0, true, 0.0, 0.01) == 0.05);
}

TEST_CASE("refinement sampler: counts, flags, clip, and exact targets") {
  const SphereF sphere({0, 0, 0}, 1.0);
  const RefineConfig c = small_sampling_config(5000, 10000, 42);
  const std::vector<RefineSample> s = sample_refinement_set(sphere, c);

  REQUIRE(s.size() == c.n_uniform + c.n_surface);
  std::size_t bad_flag = 0, bad_bounds = 0, bad_target = 0, bad_clip = 0;
  std::size_t within_3sigma = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const bool expect_near = i >= c.n_uniform;
    if (s[i].near_surface != expect_near) ++bad_flag;
    const Vec3& x = s[i].x;
    if (std::fabs(x.x) > 1.0 || std::fabs(x.y) > 1.0 || std::fabs(x.z) > 1.0)
      ++bad_bounds;
    if (s[i].target != sphere.eval(x)) ++bad_target;
    if (expect_near) {
      if (std::fabs(s[i].target) > 4.0 * c.sigma_refine) ++bad_clip;
      if (std::fabs(s[i].target) <= 3.0 * c.sigma_refine) ++within_3sigma;
    }
  }
  CHECK(bad_flag == 0);
  CHECK(bad_bounds == 0);
  CHECK(bad_target == 0);
  CHECK(bad_clip == 0);
  // Gaussian acceptance puts at least 95% of near-surface targets within
  // three sigma of the surface.
  CHECK(static_cast<double>(within_3sigma) >=
        0.95 * static_cast<double>(c.n_surface));

  // Deterministic per seed; a different seed gives a different draw.
  const std::vector<RefineSample> again = sample_refinement_set(sphere, c);
  REQUIRE(again.size() == s.size());
  std::size_t diff = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (again[i].x.x != s[i].x.x || again[i].target != s[i].target) ++diff;
  CHECK(diff == 0);
  const std::vector<RefineSample> other =
      sample_refinement_set(sphere, small_sampling_config(5000, 10000, 43));
  CHECK(other[0].x.x != s[0].x.x);
}

TEST_CASE("near-surface |target| is stochastically smaller than uniform") {
  const SphereF sphere({0, 0, 0}, 1.0);
  const RefineConfig c = small_sampling_config(10000, 10000, 7);
  const std::vector<RefineSample> s = sample_refinement_set(sphere, c);
  std::vector<double> near, uni;
  for (const RefineSample& r : s)
    (r.near_surface ? near : uni).push_back(std::fabs(r.target));
  CHECK(rank_sum_p_smaller(near, uni) < 0.01);
}

TEST_CASE("surface-free field exhausts the rejection budget") {
  const ConstF one(1.0);
  RefineConfig c = small_sampling_config(10, 10, 3);
  CHECK_THROWS_AS(sample_refinement_set(one, c), NumericError);
  try {
    sample_refinement_set(one, c);
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("degenerate") != std::string::npos);
  }
}

TEST_CASE("rank-sum p-values match hand-computed normal approximations") {
  // No ties: a = {1,2}, b = {3,4,5} gives U = 0, mu = 3, var = 3.
  const double p = rank_sum_p_smaller({1, 2}, {3, 4, 5});
  const double expect =
      0.5 * std::erfc((3.0 - 0.5) / std::sqrt(3.0) / std::sqrt(2.0));
  CHECK(p == doctest::Approx(expect).epsilon(1e-12));
  // The reversed alternative is correspondingly implausible.
  CHECK(rank_sum_p_smaller({3, 4, 5}, {1, 2}) > 0.95);

  // With ties: a = {1,1,2}, b = {1,2,2} gives U = 3, mu = 4.5,
  // var = 9/12 * (7 - 48/30) = 4.05.
  const double pt = rank_sum_p_smaller({1, 1, 2}, {1, 2, 2});
  const double expect_t =
      0.5 * std::erfc((4.5 - 3.5) / std::sqrt(4.05) / std::sqrt(2.0));
  CHECK(pt == doctest::Approx(expect_t).epsilon(1e-12));

  // Fully tied data carries no evidence.
  CHECK(rank_sum_p_smaller({1, 1, 1}, {1, 1, 1}) == 0.5);

  // Clearly separated large samples are overwhelming evidence.
  std::vector<double> lo(500), hi(500);
  Rng rng(11);
  for (auto& v : lo) v = rng.uniform(0.0, 0.3);
  for (auto& v : hi) v = rng.uniform(0.7, 1.0);
  CHECK(rank_sum_p_smaller(lo, hi) < 1e-12);
  // Same distribution: p should be unremarkable.
  std::vector<double> x(500), y(500);
  for (auto& v : x) v = rng.uniform(0.0, 1.0);
  for (auto& v : y) v = rng.uniform(0.0, 1.0);
  const double psame = rank_sum_p_smaller(x, y);
  CHECK(psame > 0.05);
  CHECK(psame < 0.95);

  CHECK_THROWS_AS(rank_sum_p_smaller({}, {1.0}), ConfigError);
  CHECK_THROWS_AS(rank_sum_p_smaller({1.0}, {}), ConfigError);
  const double nan = std::nan("");
  CHECK_THROWS_AS(rank_sum_p_smaller({nan}, {1.0}), ConfigError);
}

TEST_CASE("refine loss graph gradients match finite differences") {
  const NetworkArch arch{2, 4, 1};
  Network net = init_network(arch, 1234, NetRole::Refined);
  // Randomize so no pre-activation sits on a ReLU kink.
  Rng rng(777);
  for (Array& w : net.weights)
    for (double& v : w.data) v = rng.normal(0.0, 0.6);
  for (Array& b : net.biases)
    for (double& v : b.data) v = rng.normal(0.0, 0.3);

  RefineConfig c;
  c.lambda_mfd = 0.6;
  c.tau_surf = 0.01;
  const std::size_t B = 8;
  Array bx(B, 3), bt(B, 1), bm(B, 1);
  for (std::size_t i = 0; i < B; ++i) {
    const Vec3 p = rng.uniform_vec3({-1, -1, -1}, {1, 1, 1});
    bx.row(i)[0] = p.x;
    bx.row(i)[1] = p.y;
    bx.row(i)[2] = p.z;
    bt.data[i] = rng.uniform(-0.5, 0.5);
    bm.data[i] = (i % 3 == 0) ? 1.0 : 0.0;
  }

  const auto loss_at = [&](const Network& probe) {
    Tape t;
    return build_refine_loss(t, probe, bx, bt, bm, c).loss_total;
  };

  // Reference loss value against the scalar formula.
  {
    Tape t;
    RefineBatchGraph bg = build_refine_loss(t, net, bx, bt, bm, c);
    double expect = 0.0;
    for (std::size_t i = 0; i < B; ++i) {
      const Vec3 p{bx.row(i)[0], bx.row(i)[1], bx.row(i)[2]};
      const double f = eval_sdf(net, p);
      // The mask column already folds the |target| <= tau gate, so feed the
      // scalar formula a near_surface flag consistent with it.
      expect += loss_supervised(f, bt.data[i], bm.data[i] == 1.0,
                                c.lambda_mfd, 1e300);
    }
    expect /= static_cast<double>(B);
    CHECK(bg.loss_total == doctest::Approx(expect).epsilon(1e-12));
    CHECK(bg.loss_total ==
          doctest::Approx(bg.loss_l1 + bg.loss_mfd_weighted).epsilon(1e-12));
  }

  Tape t;
  RefineBatchGraph bg = build_refine_loss(t, net, bx, bt, bm, c);
  t.backward(bg.loss);

  const double h = 1e-6;
  std::size_t checked = 0;
  Rng pick(31);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t l = pick.uniform_int(arch.n_layers);
    const bool in_bias = pick.uniform() < 0.3;
    Array& param = in_bias ? net.biases[l] : net.weights[l];
    const std::size_t e = pick.uniform_int(param.size());

    const double saved = param.data[e];
    param.data[e] = saved + h;
    const double lp = loss_at(net);
    param.data[e] = saved - h;
    const double lm = loss_at(net);
    param.data[e] = saved;

    const double fd = (lp - lm) / (2.0 * h);
    const Array& g = in_bias ? bg.net_graph.biases[l].grad()
                             : bg.net_graph.weights[l].grad();
    const double rel =
        std::fabs(g.data[e] - fd) / std::max(0.01, std::fabs(fd));
    CHECK(rel < 1e-3);
    ++checked;
  }
  REQUIRE(checked == 10);
}

TEST_CASE("refine training is deterministic and logs both components") {
  const std::vector<RefineSample> samples = toy_samples(2000, 5);
  const NetworkArch arch{3, 8, 1};
  RefineConfig c;
  c.iterations = 50;
  c.batch = 256;
  c.base_lr = 0.002;

  const RefineResult a = refine_sdf(samples, arch, c, 17);
  const RefineResult b = refine_sdf(samples, arch, c, 17);
  CHECK(same_weights(a.net, b.net));
  CHECK(a.net.role == NetRole::Refined);
  REQUIRE(a.log.size() == c.iterations);
  CHECK(a.log.front().iteration == 1);
  CHECK(a.log.front().lr == c.base_lr);
  CHECK(a.log.back().lr ==
        cosine_lr(static_cast<long long>(c.iterations) - 1,
                  static_cast<long long>(c.iterations), c.base_lr));
  std::size_t mismatched = 0;
  for (std::size_t i = 0; i < a.log.size(); ++i)
    if (a.log[i].loss_total != b.log[i].loss_total) ++mismatched;
  CHECK(mismatched == 0);

  const RefineResult other = refine_sdf(samples, arch, c, 18);
  CHECK_FALSE(same_weights(a.net, other.net));

  // Component identity: total ~= l1 + weighted manifold term per row.
  std::size_t bad = 0, with_mfd = 0;
  for (const RefineLossRow& r : a.log) {
    if (std::fabs(r.loss_total - (r.loss_l1 + r.loss_mfd_weighted)) > 1e-12)
      ++bad;
    if (r.loss_mfd_weighted > 0.0) ++with_mfd;
  }
  CHECK(bad == 0);
  CHECK(with_mfd > 0);  // near-surface samples exist, so the term shows up

  CHECK_THROWS_AS(refine_sdf({}, arch, c, 1), ConfigError);
  RefineConfig big = c;
  big.batch = samples.size() + 1;
  CHECK_THROWS_AS(refine_sdf(samples, arch, big, 1), ConfigError);
}

TEST_CASE("lambda_mfd = 0 reduces the training loss to pure L1") {
  const std::vector<RefineSample> samples = toy_samples(2000, 6);
  const NetworkArch arch{3, 8, 1};
  RefineConfig c;
  c.iterations = 20;
  c.batch = 128;
  c.lambda_mfd = 0.0;
  const RefineResult r = refine_sdf(samples, arch, c, 9);
  std::size_t bad = 0;
  for (const RefineLossRow& row : r.log) {
    if (row.loss_total != row.loss_l1) ++bad;
    if (row.loss_mfd_weighted != 0.0) ++bad;
  }
  CHECK(bad == 0);
}

TEST_CASE("non-finite targets abort training with diagnostics") {
  std::vector<RefineSample> samples = toy_samples(512, 8);
  samples[100].target = std::nan("");
  const NetworkArch arch{3, 8, 1};
  RefineConfig c;
  c.iterations = 50;
  c.batch = 256;
  try {
    refine_sdf(samples, arch, c, 2);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("non-finite loss") != std::string::npos);
    CHECK(msg.find("iteration") != std::string::npos);
  }
}

TEST_CASE("refined network regresses an analytic sphere field") {
  // Held-out regression against the exact field: desk-size net, shortened
  // schedule.  The mean absolute error bound is the quality gate for the
  // supervised stage.
  const SphereF sphere({0, 0, 0}, 1.0);
  RefineConfig c;
  c.n_uniform = 20000;
  c.n_surface = 30000;
  c.iterations = 2000;
  c.batch = 1024;
  c.seed = 21;
  const std::vector<RefineSample> samples = sample_refinement_set(sphere, c);
  const RefineResult r = refine_sdf(samples, NetworkArch{4, 64, 2}, c, 21);

  Rng rng(999);
  double err = 0.0;
  const std::size_t n_held_out = 2000;
  for (std::size_t i = 0; i < n_held_out; ++i) {
    const Vec3 x = rng.uniform_vec3({-1, -1, -1}, {1, 1, 1});
    err += std::fabs(eval_sdf(r.net, x) - sphere.eval(x));
  }
  err /= static_cast<double>(n_held_out);
  CHECK(err < 0.01);
}

TEST_CASE("refine sample cache round-trips exactly for f32 samples") {
  std::vector<RefineSample> samples(257);
  Rng rng(12);
  for (auto& s : samples) {
    const Vec3 p = rng.uniform_vec3({-1, -1, -1}, {1, 1, 1});
    s.x = {f32_round(p.x), f32_round(p.y), f32_round(p.z)};
    s.target = f32_round(rng.uniform(-1, 1));
    s.near_surface = rng.uniform() < 0.5;
  }

  TempFile tmp("refine_cache.rcss");
  save_refine_samples(tmp.path, samples);
  const std::vector<RefineSample> back = load_refine_samples(tmp.path);
  REQUIRE(back.size() == samples.size());
  std::size_t bad = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (back[i].x.x != samples[i].x.x || back[i].x.y != samples[i].x.y ||
        back[i].x.z != samples[i].x.z)
      ++bad;
    if (back[i].target != samples[i].target) ++bad;
    if (back[i].near_surface != samples[i].near_surface) ++bad;
  }
  CHECK(bad == 0);

  TempFile tmp2("refine_cache2.rcss");
  save_refine_samples(tmp2.path, back);
  CHECK(slurp(tmp.path) == slurp(tmp2.path));
  CHECK(slurp(tmp.path).size() == 16 + 17 * samples.size());
  CHECK(slurp(tmp.path).substr(0, 4) == "RCSS");
}

TEST_CASE("malformed sample caches are rejected with byte offsets") {
  TempFile tmp("refine_bad.rcss");
  save_refine_samples(tmp.path, toy_samples(8, 1));
  const std::string good = slurp(tmp.path);

  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_refine_samples("/tmp/rowcol_no_such.rcss"), IoError);
  }
  SUBCASE("bad magic") {
    std::string bytes = good;
    bytes[0] = 'Z';
    spit(tmp.path, bytes);
    CHECK(io_error_message([&] { load_refine_samples(tmp.path); })
              .find("magic") != std::string::npos);
  }
  SUBCASE("unsupported version") {
    std::string bytes = good;
    bytes[4] = 9;
    spit(tmp.path, bytes);
    CHECK(io_error_message([&] { load_refine_samples(tmp.path); })
              .find("version") != std::string::npos);
  }
  SUBCASE("oversized count") {
    std::string bytes = good.substr(0, 16);
    bytes[14] = 0x10;  // count |= 2^52
    spit(tmp.path, bytes);
    CHECK(io_error_message([&] { load_refine_samples(tmp.path); })
              .find("too large") != std::string::npos);
  }
  SUBCASE("truncated header") {
    spit(tmp.path, good.substr(0, 10));
    CHECK(io_error_message([&] { load_refine_samples(tmp.path); })
              .find("header") != std::string::npos);
  }
  SUBCASE("truncated payload carries the byte offset") {
    spit(tmp.path, good.substr(0, good.size() - 5));
    const std::string msg =
        io_error_message([&] { load_refine_samples(tmp.path); });
    CHECK(msg.find("truncated") != std::string::npos);
    CHECK(msg.find("offset") != std::string::npos);
  }
  SUBCASE("trailing bytes") {
    spit(tmp.path, good + "y");
    CHECK(io_error_message([&] { load_refine_samples(tmp.path); })
              .find("trailing") != std::string::npos);
  }
  SUBCASE("invalid flag byte") {
    std::string bytes = good;
    bytes[16 + 16] = 7;  // first sample's flag
    spit(tmp.path, bytes);
    CHECK(io_error_message([&] { load_refine_samples(tmp.path); })
              .find("flag") != std::string::npos);
  }
}

TEST_CASE("refine loss log is written with a stable schema") {
  const std::vector<RefineSample> samples = toy_samples(1000, 4);
  RefineConfig c;
  c.iterations = 10;
  c.batch = 128;
  const RefineResult r = refine_sdf(samples, NetworkArch{3, 8, 1}, c, 3);

  TempFile tmp("refine_loss.csv");
  write_refine_loss_log(tmp.path, r.log);
  const std::string text = slurp(tmp.path);
  CHECK(text.rfind("iteration,lr,loss_total,loss_l1,loss_mfd_weighted\n", 0) ==
        0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 11);

  TempFile tmp2("refine_loss2.csv");
  write_refine_loss_log(tmp2.path, r.log);
  CHECK(slurp(tmp.path) == slurp(tmp2.path));
}
