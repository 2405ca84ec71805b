#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "rowcol/vec3.hpp"

namespace rowcol {

// Deterministic RNG with hand-rolled distributions.  std::mt19937_64's output
// sequence is pinned by the standard, but the std distributions are not, so we
// build uniform/normal ourselves to get identical streams on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1): top 53 bits scaled by 2^-53.
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n), n > 0.  Rejection-free modulo is fine here: the
  // bias at n << 2^64 is far below anything observable, and the stream stays
  // portable.
  std::uint64_t uniform_int(std::uint64_t n) { return gen_() % n; }

  // Standard normal via Box-Muller; caches the second deviate.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    // Guard against log(0).
    while (u1 <= 0.0) u1 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 2.0 * M_PI * u2;
    spare_ = r * std::sin(t);
    has_spare_ = true;
    return r * std::cos(t);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  Vec3 uniform_vec3(const Vec3& lo, const Vec3& hi) {
    // Evaluation order of braced init is left-to-right, so the stream order is
    // pinned as x, y, z.
    return Vec3{uniform(lo.x, hi.x), uniform(lo.y, hi.y), uniform(lo.z, hi.z)};
  }

  Vec3 normal_vec3(double stddev) {
    return Vec3{normal(0.0, stddev), normal(0.0, stddev), normal(0.0, stddev)};
  }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace rowcol
