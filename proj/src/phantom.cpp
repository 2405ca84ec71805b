#include "rowcol/phantom.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <utility>

#include "rowcol/csg.hpp"
#include "rowcol/errors.hpp"
#include "rowcol/rng.hpp"

namespace rowcol {
namespace {

constexpr double kProjectTol = 1e-6;   // |f| at an accepted surface point
// Projection contracts by roughly the in-plane gradient magnitude per step;
// near an extreme slice of a large solid that can be as weak as ~0.07, so
// give it room (ln(1e-6) / ln(0.93) ~ 190 steps).
constexpr int kProjectIters = 256;
constexpr double kInPlaneHalf = 1.2;   // candidate / probe square half-width
constexpr double kPlaneRange = 1.5;    // slice coordinates swept per scan
constexpr std::size_t kProbeRes = 48;  // per-axis activity probe grid
constexpr std::size_t kMaxPlanes = 100000;

struct SphereField final : SdfField {
  Vec3 c;
  double r;
  SphereField(const Vec3& c, double r) : c(c), r(r) {}
  double eval(const Vec3& x) const override { return norm(x - c) - r; }
  Vec3 gradient(const Vec3& x) const override {
    const double n = norm(x - c);
    return n > 0.0 ? (x - c) / n : Vec3{0.0, 0.0, 0.0};
  }
};

// rmin*(|u| - 1) with u = (x-c)/radii: sign and zero set are exact, and the
// magnitude never exceeds the true distance (a real step of length d moves
// u by at most d/rmin).  Exact when the radii coincide.
struct EllipsoidField final : SdfField {
  Vec3 c, radii;
  double rmin;
  EllipsoidField(const Vec3& c, const Vec3& radii)
      : c(c), radii(radii), rmin(std::min({radii.x, radii.y, radii.z})) {}
  double eval(const Vec3& x) const override {
    const Vec3 u{(x.x - c.x) / radii.x, (x.y - c.y) / radii.y,
                 (x.z - c.z) / radii.z};
    return rmin * (norm(u) - 1.0);
  }
  Vec3 gradient(const Vec3& x) const override {
    const Vec3 u{(x.x - c.x) / radii.x, (x.y - c.y) / radii.y,
                 (x.z - c.z) / radii.z};
    const double n = norm(u);
    if (n == 0.0) return {0.0, 0.0, 0.0};
    return {rmin * u.x / (n * radii.x), rmin * u.y / (n * radii.y),
            rmin * u.z / (n * radii.z)};
  }
};

// Exact axis-aligned box distance: |max(q,0)| outside, -min face depth
// inside, q = |x-c| - half.
struct BoxField final : SdfField {
  Vec3 c, half;
  BoxField(const Vec3& c, const Vec3& half) : c(c), half(half) {}
  double eval(const Vec3& x) const override {
    const Vec3 q = cwise_abs(x - c) - half;
    const Vec3 o = cwise_max(q, {0.0, 0.0, 0.0});
    return norm(o) + std::min(std::max({q.x, q.y, q.z}), 0.0);
  }
  Vec3 gradient(const Vec3& x) const override {
    const Vec3 d = x - c;
    const Vec3 q = cwise_abs(d) - half;
    const Vec3 o = cwise_max(q, {0.0, 0.0, 0.0});
    const double n = norm(o);
    if (n > 0.0) {  // outside: toward the nearest face/edge/corner
      return {(d.x > 0.0 ? o.x : -o.x) / n, (d.y > 0.0 ? o.y : -o.y) / n,
              (d.z > 0.0 ? o.z : -o.z) / n};
    }
    // inside: out of the least-deep face
    Vec3 g{0.0, 0.0, 0.0};
    const int axis = q.x >= q.y ? (q.x >= q.z ? 0 : 2) : (q.y >= q.z ? 1 : 2);
    g[axis] = d[axis] >= 0.0 ? 1.0 : -1.0;
    return g;
  }
};

struct CapsuleField final : SdfField {
  Vec3 a, ab;
  double inv_len2, r;
  CapsuleField(const Vec3& a, const Vec3& b, double r)
      : a(a), ab(b - a), inv_len2(1.0 / norm2(b - a)), r(r) {}
  double eval(const Vec3& x) const override {
    const double h =
        std::clamp(dot(x - a, ab) * inv_len2, 0.0, 1.0);
    return norm(x - (a + h * ab)) - r;
  }
  Vec3 gradient(const Vec3& x) const override {
    const double h =
        std::clamp(dot(x - a, ab) * inv_len2, 0.0, 1.0);
    const Vec3 d = x - (a + h * ab);
    const double n = norm(d);
    return n > 0.0 ? d / n : Vec3{0.0, 0.0, 0.0};
  }
};

struct DilatedField final : SdfField {
  FieldPtr base;
  Vec3 dir;
  std::vector<double> deltas;
  DilatedField(FieldPtr base, const Vec3& dir, std::vector<double> deltas)
      : base(std::move(base)), dir(dir), deltas(std::move(deltas)) {}
  double eval(const Vec3& x) const override {
    double best = base->eval(x - deltas[0] * dir);
    for (std::size_t i = 1; i < deltas.size(); ++i) {
      best = std::min(best, base->eval(x - deltas[i] * dir));
    }
    return best;
  }
  Vec3 gradient(const Vec3& x) const override {  // active tap (first wins)
    double best = base->eval(x - deltas[0] * dir);
    std::size_t at = 0;
    for (std::size_t i = 1; i < deltas.size(); ++i) {
      const double v = base->eval(x - deltas[i] * dir);
      if (v < best) {
        best = v;
        at = i;
      }
    }
    return base->gradient(x - deltas[at] * dir);
  }
};

bool finite3(const Vec3& v) {
  return std::isfinite(v.x) && std::isfinite(v.y) && std::isfinite(v.z);
}

// --- expression-tree text ---------------------------------------------------

struct ShapeParser {
  const std::string& s;
  std::size_t pos = 0;

  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError("shape spec: " + what + " at offset " +
                      std::to_string(pos));
  }
  void skip_ws() {
    while (pos < s.size() &&
           std::isspace(static_cast<unsigned char>(s[pos]))) {
      ++pos;
    }
  }
  void expect(char c) {
    skip_ws();
    if (pos >= s.size() || s[pos] != c) {
      fail(std::string("expected '") + c + "'");
    }
    ++pos;
  }
  std::string ident() {
    skip_ws();
    const std::size_t begin = pos;
    while (pos < s.size() &&
           (std::isalpha(static_cast<unsigned char>(s[pos])) ||
            s[pos] == '_')) {
      ++pos;
    }
    if (pos == begin) fail("expected a shape name");
    return s.substr(begin, pos - begin);
  }
  double number() {
    skip_ws();
    char* end = nullptr;
    const double v = std::strtod(s.c_str() + pos, &end);
    if (end == s.c_str() + pos) fail("expected a number");
    pos = static_cast<std::size_t>(end - s.c_str());
    if (!std::isfinite(v)) fail("number must be finite");
    return v;
  }
  Vec3 vec3() {
    const double x = number();
    const double y = number();
    const double z = number();
    return {x, y, z};
  }
  ShapeSpec shape() {
    const std::string name = ident();
    ShapeSpec spec;
    expect('(');
    if (name == "sphere") {
      spec.kind = ShapeKind::Sphere;
      spec.a = vec3();
      expect(';');
      spec.r = number();
    } else if (name == "ellipsoid") {
      spec.kind = ShapeKind::Ellipsoid;
      spec.a = vec3();
      expect(';');
      spec.radii = vec3();
    } else if (name == "box") {
      spec.kind = ShapeKind::Box;
      spec.a = vec3();
      expect(';');
      spec.radii = vec3();
    } else if (name == "capsule") {
      spec.kind = ShapeKind::Capsule;
      spec.a = vec3();
      expect(';');
      spec.b = vec3();
      expect(';');
      spec.r = number();
    } else if (name == "union" || name == "intersect" ||
               name == "difference") {
      spec.kind = name == "union" ? ShapeKind::Union
                  : name == "intersect" ? ShapeKind::Intersect
                                        : ShapeKind::Difference;
      spec.children.push_back(shape());
      expect(',');
      spec.children.push_back(shape());
    } else {
      fail("unknown shape '" + name + "'");
    }
    expect(')');
    return spec;
  }
};

void append_vec3(std::string& out, const Vec3& v) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g", v.x, v.y, v.z);
  out += buf;
}

void append_num(std::string& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out += buf;
}

void format_rec(std::string& out, const ShapeSpec& spec) {
  switch (spec.kind) {
    case ShapeKind::Sphere:
      out += "sphere(";
      append_vec3(out, spec.a);
      out += "; ";
      append_num(out, spec.r);
      break;
    case ShapeKind::Ellipsoid:
      out += "ellipsoid(";
      append_vec3(out, spec.a);
      out += "; ";
      append_vec3(out, spec.radii);
      break;
    case ShapeKind::Box:
      out += "box(";
      append_vec3(out, spec.a);
      out += "; ";
      append_vec3(out, spec.radii);
      break;
    case ShapeKind::Capsule:
      out += "capsule(";
      append_vec3(out, spec.a);
      out += "; ";
      append_vec3(out, spec.b);
      out += "; ";
      append_num(out, spec.r);
      break;
    case ShapeKind::Union:
    case ShapeKind::Intersect:
    case ShapeKind::Difference:
      out += spec.kind == ShapeKind::Union       ? "union("
             : spec.kind == ShapeKind::Intersect ? "intersect("
                                                 : "difference(";
      format_rec(out, spec.children[0]);
      out += ", ";
      format_rec(out, spec.children[1]);
      break;
  }
  out += ")";
}

// Orthonormal in-plane basis for a scan direction: e1, e2 both unit and
// perpendicular to dir, chosen deterministically.
void plane_basis(const Vec3& dir, Vec3& e1, Vec3& e2) {
  const double ax = std::fabs(dir.x), ay = std::fabs(dir.y),
               az = std::fabs(dir.z);
  Vec3 axis{0.0, 0.0, 0.0};
  const int least = ax <= ay ? (ax <= az ? 0 : 2) : (ay <= az ? 1 : 2);
  axis[least] = 1.0;
  e1 = normalized(cross(dir, axis));
  e2 = cross(dir, e1);
}

}  // namespace

void validate_shape(const ShapeSpec& spec) {
  switch (spec.kind) {
    case ShapeKind::Sphere:
      if (!finite3(spec.a) || !std::isfinite(spec.r)) {
        throw ConfigError("shape spec: sphere payload must be finite");
      }
      if (!(spec.r > 0.0)) {
        throw ConfigError("shape spec: sphere radius must be positive");
      }
      break;
    case ShapeKind::Ellipsoid:
    case ShapeKind::Box:
      if (!finite3(spec.a) || !finite3(spec.radii)) {
        throw ConfigError("shape spec: payload must be finite");
      }
      if (!(spec.radii.x > 0.0) || !(spec.radii.y > 0.0) ||
          !(spec.radii.z > 0.0)) {
        throw ConfigError(spec.kind == ShapeKind::Ellipsoid
                              ? "shape spec: ellipsoid semi-axes must be "
                                "positive"
                              : "shape spec: box half-extents must be "
                                "positive");
      }
      break;
    case ShapeKind::Capsule:
      if (!finite3(spec.a) || !finite3(spec.b) || !std::isfinite(spec.r)) {
        throw ConfigError("shape spec: capsule payload must be finite");
      }
      if (!(spec.r > 0.0)) {
        throw ConfigError("shape spec: capsule radius must be positive");
      }
      if (!(norm2(spec.b - spec.a) > 0.0)) {
        throw ConfigError("shape spec: capsule endpoints must be distinct");
      }
      break;
    case ShapeKind::Union:
    case ShapeKind::Intersect:
    case ShapeKind::Difference:
      if (spec.children.size() != 2) {
        throw ConfigError("shape spec: CSG node needs exactly two children");
      }
      validate_shape(spec.children[0]);
      validate_shape(spec.children[1]);
      break;
  }
}

std::string format_shape(const ShapeSpec& spec) {
  std::string out;
  format_rec(out, spec);
  return out;
}

ShapeSpec parse_shape(const std::string& text) {
  ShapeParser p{text};
  ShapeSpec spec = p.shape();
  p.skip_ws();
  if (p.pos != text.size()) p.fail("trailing characters");
  validate_shape(spec);
  return spec;
}

void save_shape(const std::string& path, const ShapeSpec& spec) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  const std::string text = format_shape(spec) + "\n";
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("write failed for '" + path + "'");
}

ShapeSpec load_shape(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open shape spec '" + path + "'");
  const std::string text((std::istreambuf_iterator<char>(in)),
                         std::istreambuf_iterator<char>());
  return parse_shape(text);
}

FieldPtr analytic_field(const ShapeSpec& spec) {
  validate_shape(spec);
  switch (spec.kind) {
    case ShapeKind::Sphere:
      return std::make_shared<SphereField>(spec.a, spec.r);
    case ShapeKind::Ellipsoid:
      return std::make_shared<EllipsoidField>(spec.a, spec.radii);
    case ShapeKind::Box:
      return std::make_shared<BoxField>(spec.a, spec.radii);
    case ShapeKind::Capsule:
      return std::make_shared<CapsuleField>(spec.a, spec.b, spec.r);
    case ShapeKind::Union:
      return csg_union(analytic_field(spec.children[0]),
                       analytic_field(spec.children[1]));
    case ShapeKind::Intersect:
      return csg_intersect(analytic_field(spec.children[0]),
                           analytic_field(spec.children[1]));
    case ShapeKind::Difference:
      return csg_difference(analytic_field(spec.children[0]),
                            analytic_field(spec.children[1]));
  }
  throw ConfigError("shape spec: unknown kind");
}

FieldPtr dilate_along(FieldPtr field, const Vec3& direction, double thickness,
                      std::size_t taps) {
  if (!field) throw ConfigError("dilate: null field");
  if (!finite3(direction) ||
      std::fabs(norm(direction) - 1.0) > 1e-9) {
    throw ConfigError("dilate: direction must be a unit vector");
  }
  if (!(thickness >= 0.0) || thickness >= 1.0) {
    throw ConfigError("dilate: thickness must be in [0, 1)");
  }
  if (taps < 2) throw ConfigError("dilate: taps must be >= 2");
  if (thickness == 0.0) return field;
  std::vector<double> deltas(taps);
  for (std::size_t i = 0; i < taps; ++i) {
    deltas[i] = -0.5 * thickness +
                thickness * (static_cast<double>(i) /
                             static_cast<double>(taps - 1));
  }
  return std::make_shared<DilatedField>(std::move(field), direction,
                                        std::move(deltas));
}

void validate_scan_spec(const ScanSpec& spec) {
  if (!finite3(spec.direction) ||
      std::fabs(norm(spec.direction) - 1.0) > 1e-9) {
    throw ConfigError("scan: direction must be a unit vector");
  }
  if (!(spec.thickness >= 0.0) || spec.thickness >= 1.0) {
    throw ConfigError("scan: thickness must be in [0, 1)");
  }
  if (!(spec.slice_spacing > 0.0) || !std::isfinite(spec.slice_spacing)) {
    throw ConfigError("scan: slice_spacing must be positive");
  }
  if (2.0 * kPlaneRange / spec.slice_spacing >
      static_cast<double>(kMaxPlanes)) {
    throw ConfigError("scan: slice_spacing too small");
  }
  if (!(spec.noise_sigma >= 0.0) || !std::isfinite(spec.noise_sigma)) {
    throw ConfigError("scan: noise_sigma must be >= 0");
  }
  if (spec.n_points == 0) {
    throw ConfigError("scan: n_points must be positive");
  }
}

PointCloud simulate_scan(const ShapeSpec& gt, const ScanSpec& scan,
                         ViewTag tag) {
  validate_scan_spec(scan);
  const FieldPtr field =
      dilate_along(analytic_field(gt), scan.direction, scan.thickness);
  Vec3 e1, e2;
  plane_basis(scan.direction, e1, e2);

  // Planes that actually cut the solid: a coarse in-plane probe looking for
  // a nonpositive field value.
  const long long m_max = static_cast<long long>(
      std::ceil(kPlaneRange / scan.slice_spacing));
  std::vector<double> planes;
  for (long long m = -m_max; m <= m_max; ++m) {
    const double s = static_cast<double>(m) * scan.slice_spacing;
    bool active = false;
    for (std::size_t pi = 0; pi < kProbeRes && !active; ++pi) {
      const double alpha =
          -kInPlaneHalf + 2.0 * kInPlaneHalf *
                              (static_cast<double>(pi) /
                               static_cast<double>(kProbeRes - 1));
      for (std::size_t pj = 0; pj < kProbeRes && !active; ++pj) {
        const double beta =
            -kInPlaneHalf + 2.0 * kInPlaneHalf *
                                (static_cast<double>(pj) /
                                 static_cast<double>(kProbeRes - 1));
        active = field->eval(s * scan.direction + alpha * e1 + beta * e2) <=
                 0.0;
      }
    }
    if (active) planes.push_back(s);
  }
  if (planes.empty()) {
    throw NumericError("scan: no slice plane intersects the surface");
  }

  Rng rng(scan.seed);
  PointCloud cloud;
  cloud.view_tag = tag;
  cloud.points.reserve(scan.n_points);
  const std::size_t base = scan.n_points / planes.size();
  const std::size_t rem = scan.n_points % planes.size();
  for (std::size_t p = 0; p < planes.size(); ++p) {
    const std::size_t quota = base + (p < rem ? 1 : 0);
    if (quota == 0) continue;
    const double s = planes[p];
    std::size_t got = 0;
    std::size_t attempts = 0;
    const std::size_t budget = 200 * quota + 200;
    while (got < quota) {
      if (++attempts > budget) {
        throw NumericError("scan: projection kept missing the contour at "
                           "slice " +
                           std::to_string(s));
      }
      const double alpha = rng.uniform(-kInPlaneHalf, kInPlaneHalf);
      const double beta = rng.uniform(-kInPlaneHalf, kInPlaneHalf);
      Vec3 x = s * scan.direction + alpha * e1 + beta * e2;
      bool ok = false;
      for (int it = 0; it < kProjectIters; ++it) {
        const double v = field->eval(x);
        if (!std::isfinite(v)) break;
        if (std::fabs(v) <= kProjectTol) {
          ok = true;
          break;
        }
        const Vec3 g = field->gradient(x);
        const Vec3 gp = g - dot(g, scan.direction) * scan.direction;
        const double n = norm(gp);
        if (n < 1e-8) break;
        x -= v * (gp / n);
      }
      if (!ok) continue;
      if (scan.noise_sigma > 0.0) x += rng.normal_vec3(scan.noise_sigma);
      cloud.points.push_back(x);
      ++got;
    }
  }
  return cloud;
}

PhantomName parse_phantom_name(const std::string& name) {
  if (name == "sphere-cap") return PhantomName::SphereCap;
  if (name == "ellipsoid-pair") return PhantomName::EllipsoidPair;
  if (name == "vertebra-toy") return PhantomName::VertebraToy;
  throw ConfigError("unknown phantom '" + name +
                    "' (want sphere-cap, ellipsoid-pair, or vertebra-toy)");
}

const char* phantom_name_string(PhantomName name) {
  switch (name) {
    case PhantomName::SphereCap:
      return "sphere-cap";
    case PhantomName::EllipsoidPair:
      return "ellipsoid-pair";
    case PhantomName::VertebraToy:
      return "vertebra-toy";
  }
  return "unknown";
}

Phantom make_phantom(PhantomName name) {
  Phantom out;
  switch (name) {
    case PhantomName::SphereCap: {
      // Hemisphere: a sphere cut by a box whose top face is the plane y=0.
      ShapeSpec sphere;
      sphere.kind = ShapeKind::Sphere;
      sphere.a = {0.0, 0.0, 0.0};
      sphere.r = 0.55;
      ShapeSpec cut;
      cut.kind = ShapeKind::Box;
      cut.a = {0.0, -0.525, 0.0};
      cut.radii = {0.85, 0.525, 0.85};
      out.spec.kind = ShapeKind::Intersect;
      out.spec.children = {sphere, cut};
      break;
    }
    case PhantomName::EllipsoidPair: {
      ShapeSpec left, right;
      left.kind = right.kind = ShapeKind::Ellipsoid;
      left.a = {-0.18, 0.0, 0.0};
      right.a = {0.18, 0.0, 0.0};
      left.radii = right.radii = {0.42, 0.3, 0.24};
      out.spec.kind = ShapeKind::Union;
      out.spec.children = {left, right};
      break;
    }
    case PhantomName::VertebraToy: {
      // Ellipsoid body, capsule spinous process (posterior, -y), and two
      // capsule transverse processes; every feature is >= 4 voxels across
      // at 256^3 (thinnest radius 0.07 = 0.14 diameter vs 4/128 = 0.031).
      ShapeSpec body;
      body.kind = ShapeKind::Ellipsoid;
      body.a = {0.0, 0.08, 0.0};
      body.radii = {0.42, 0.26, 0.2};
      ShapeSpec spinous;
      spinous.kind = ShapeKind::Capsule;
      spinous.a = {0.0, -0.05, 0.0};
      spinous.b = {0.0, -0.55, 0.0};
      spinous.r = 0.085;
      ShapeSpec left;
      left.kind = ShapeKind::Capsule;
      left.a = {-0.15, 0.1, 0.0};
      left.b = {-0.62, 0.18, 0.05};
      left.r = 0.07;
      ShapeSpec right = left;
      right.a.x = -left.a.x;
      right.b.x = -left.b.x;
      ShapeSpec core;
      core.kind = ShapeKind::Union;
      core.children = {body, spinous};
      ShapeSpec wings;
      wings.kind = ShapeKind::Union;
      wings.children = {left, right};
      out.spec.kind = ShapeKind::Union;
      out.spec.children = {core, wings};
      break;
    }
  }
  const Aabb cube{{-1.0, -1.0, -1.0}, {1.0, 1.0, 1.0}};
  out.gt_mesh =
      marching_cubes(evaluate_grid(*analytic_field(out.spec), 256, cube));
  return out;
}

}  // namespace rowcol
