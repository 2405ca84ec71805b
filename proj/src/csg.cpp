#include "rowcol/csg.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "rowcol/binio.hpp"
#include "rowcol/errors.hpp"
#include "rowcol/parallel.hpp"

namespace rowcol {

CsgField::CsgField(CsgOp op, FieldPtr left, FieldPtr right)
    : op_(op), left_(std::move(left)), right_(std::move(right)) {
  if (!left_ || !right_) throw ConfigError("csg: null child field");
}

double CsgField::eval(const Vec3& x) const {
  const double l = left_->eval(x);
  const double r = right_->eval(x);
  switch (op_) {
    case CsgOp::Intersect: return std::max(l, r);
    case CsgOp::Union: return std::min(l, r);
    case CsgOp::Difference: return std::max(l, -r);
  }
  return l;
}

void CsgField::eval_batch(const std::vector<Vec3>& xs,
                          std::vector<double>& out) const {
  std::vector<double> rv;
  left_->eval_batch(xs, out);
  right_->eval_batch(xs, rv);
  switch (op_) {
    case CsgOp::Intersect:
      for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = std::max(out[i], rv[i]);
      break;
    case CsgOp::Union:
      for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = std::min(out[i], rv[i]);
      break;
    case CsgOp::Difference:
      for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = std::max(out[i], -rv[i]);
      break;
  }
}

Vec3 CsgField::gradient(const Vec3& x) const {
  const double l = left_->eval(x);
  const double r = right_->eval(x);
  switch (op_) {
    case CsgOp::Intersect:
      return l >= r ? left_->gradient(x) : right_->gradient(x);
    case CsgOp::Union:
      return l <= r ? left_->gradient(x) : right_->gradient(x);
    case CsgOp::Difference:
      return l >= -r ? left_->gradient(x) : -right_->gradient(x);
  }
  return left_->gradient(x);
}

FieldPtr csg_intersect(FieldPtr a, FieldPtr b) {
  return std::make_shared<CsgField>(CsgOp::Intersect, std::move(a),
                                    std::move(b));
}
FieldPtr csg_union(FieldPtr a, FieldPtr b) {
  return std::make_shared<CsgField>(CsgOp::Union, std::move(a), std::move(b));
}
FieldPtr csg_difference(FieldPtr a, FieldPtr b) {
  return std::make_shared<CsgField>(CsgOp::Difference, std::move(a),
                                    std::move(b));
}

double grid_coord(double lo, double hi, std::size_t res, std::size_t i) {
  return lo + (hi - lo) * (static_cast<double>(i) /
                           static_cast<double>(res - 1));
}

GridField::GridField(std::array<std::size_t, 3> res, const Aabb& box,
                     std::vector<double> values)
    : res_(res), box_(box), values_(std::move(values)) {
  for (int a = 0; a < 3; ++a) {
    if (res_[a] < 2)
      throw ConfigError("grid: resolution must be >= 2 per axis, got " +
                        std::to_string(res_[a]));
    if (!(box_.lo[a] < box_.hi[a]))
      throw ConfigError("grid: bounding box must have positive extent");
  }
  const std::size_t want = res_[0] * res_[1] * res_[2];
  if (values_.size() != want)
    throw ConfigError("grid: expected " + std::to_string(want) +
                      " values, got " + std::to_string(values_.size()));
}

double GridField::eval(const Vec3& x) const {
  // Clamp into the box; the leftover distance extends the field outside.
  const Vec3 c = cwise_max(box_.lo, cwise_min(box_.hi, x));
  const double outside = norm(x - c);

  std::size_t i0[3];
  double frac[3];
  for (int a = 0; a < 3; ++a) {
    const double t = (c[a] - box_.lo[a]) / (box_.hi[a] - box_.lo[a]) *
                     static_cast<double>(res_[a] - 1);
    // Snap to the lattice when within rounding slop of a node, so queries at
    // node positions return stored values exactly.
    const double r = std::nearbyint(t);
    const double u = std::fabs(t - r) < 1e-9 ? r : t;
    std::size_t lo = static_cast<std::size_t>(u);
    if (lo > res_[a] - 2) lo = res_[a] - 2;
    i0[a] = lo;
    frac[a] = u - static_cast<double>(lo);
  }

  double v = 0.0;
  for (int dz = 0; dz < 2; ++dz)
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx) {
        const double w = (dx ? frac[0] : 1.0 - frac[0]) *
                         (dy ? frac[1] : 1.0 - frac[1]) *
                         (dz ? frac[2] : 1.0 - frac[2]);
        if (w != 0.0)
          v += w * node_value(i0[0] + dx, i0[1] + dy, i0[2] + dz);
      }
  return v + outside;
}

void GridField::eval_batch(const std::vector<Vec3>& xs,
                           std::vector<double>& out) const {
  out.resize(xs.size());
  par::for_index(xs.size(), [&](std::size_t i) { out[i] = eval(xs[i]); });
}

GridField sample_grid(const SdfField& field, std::array<std::size_t, 3> res,
                      const Aabb& box) {
  for (int a = 0; a < 3; ++a)
    if (res[a] < 2)
      throw ConfigError("sample_grid: resolution must be >= 2 per axis");
  const std::size_t total = res[0] * res[1] * res[2];
  std::vector<double> values(total);
  constexpr std::size_t kChunk = 65536;
  std::vector<Vec3> pts;
  std::vector<double> vals;
  for (std::size_t base = 0; base < total; base += kChunk) {
    const std::size_t n = std::min(kChunk, total - base);
    pts.resize(n);
    for (std::size_t e = 0; e < n; ++e) {
      const std::size_t idx = base + e;
      const std::size_t i = idx % res[0];
      const std::size_t j = (idx / res[0]) % res[1];
      const std::size_t k = idx / (res[0] * res[1]);
      pts[e] = Vec3{grid_coord(box.lo.x, box.hi.x, res[0], i),
                    grid_coord(box.lo.y, box.hi.y, res[1], j),
                    grid_coord(box.lo.z, box.hi.z, res[2], k)};
    }
    field.eval_batch(pts, vals);
    std::copy(vals.begin(), vals.end(), values.begin() + base);
  }
  return GridField(res, box, std::move(values));
}

GridField grid_max(const GridField& a, const GridField& b) {
  const bool same_box = a.bbox().lo.x == b.bbox().lo.x &&
                        a.bbox().lo.y == b.bbox().lo.y &&
                        a.bbox().lo.z == b.bbox().lo.z &&
                        a.bbox().hi.x == b.bbox().hi.x &&
                        a.bbox().hi.y == b.bbox().hi.y &&
                        a.bbox().hi.z == b.bbox().hi.z;
  if (a.res() != b.res() || !same_box)
    throw ConfigError("grid_max: grids must share resolution and bounds");
  std::vector<double> values(a.values().size());
  for (std::size_t e = 0; e < values.size(); ++e)
    values[e] = std::max(a.values()[e], b.values()[e]);
  return GridField(a.res(), a.bbox(), std::move(values));
}

namespace {
constexpr char kGridMagic[4] = {'R', 'C', 'S', 'D'};
constexpr std::uint32_t kGridVersion = 1;
// Header: magic(4) + version(4) + res(12) + bbox(24).
constexpr std::size_t kGridHeader = 44;
// Memory guard when reading untrusted resolution fields (2^28 f32 = 1 GiB).
constexpr std::uint64_t kMaxGridValues = 1ull << 28;
}  // namespace

void save_grid(const std::string& path, const GridField& grid) {
  std::string buf;
  buf.reserve(kGridHeader + 4 * grid.values().size());
  buf.append(kGridMagic, 4);
  binio::append_u32(buf, kGridVersion);
  for (int a = 0; a < 3; ++a)
    binio::append_u32(buf, static_cast<std::uint32_t>(grid.res()[a]));
  for (int a = 0; a < 3; ++a) binio::append_f32(buf, grid.bbox().lo[a]);
  for (int a = 0; a < 3; ++a) binio::append_f32(buf, grid.bbox().hi[a]);
  for (double v : grid.values()) binio::append_f32(buf, v);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("write failed for '" + path + "'");
}

GridField load_grid(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open grid snapshot '" + path + "'");
  std::string buf((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());
  const auto fail = [&](std::size_t off, const std::string& what) {
    throw IoError("'" + path + "': " + what + " at byte offset " +
                  std::to_string(off));
  };
  if (buf.size() < kGridHeader) fail(buf.size(), "truncated grid header");
  if (std::memcmp(buf.data(), kGridMagic, 4) != 0)
    fail(0, "bad magic (want RCSD)");
  const std::uint32_t version = binio::read_u32(buf, 4);
  if (version != kGridVersion)
    fail(4, "unsupported version " + std::to_string(version));

  std::array<std::size_t, 3> res;
  std::uint64_t total = 1;
  for (int a = 0; a < 3; ++a) {
    res[a] = binio::read_u32(buf, 8 + 4 * static_cast<std::size_t>(a));
    if (res[a] < 2)
      fail(8 + 4 * static_cast<std::size_t>(a),
           "resolution must be >= 2, got " + std::to_string(res[a]));
    total *= res[a];
  }
  if (total > kMaxGridValues) fail(8, "grid too large");

  Aabb box;
  for (int a = 0; a < 3; ++a) {
    box.lo[a] = binio::read_f32(buf, 20 + 4 * static_cast<std::size_t>(a));
    box.hi[a] = binio::read_f32(buf, 32 + 4 * static_cast<std::size_t>(a));
    if (!std::isfinite(box.lo[a]) || !std::isfinite(box.hi[a]) ||
        !(box.lo[a] < box.hi[a]))
      fail(20, "malformed bounding box");
  }

  const std::size_t want = kGridHeader + 4 * static_cast<std::size_t>(total);
  if (buf.size() < want)
    fail(buf.size(), "truncated values (need " + std::to_string(want) +
                         " bytes total)");
  if (buf.size() > want) fail(want, "trailing bytes after grid values");

  std::vector<double> values(static_cast<std::size_t>(total));
  for (std::size_t e = 0; e < values.size(); ++e)
    values[e] = binio::read_f32(buf, kGridHeader + 4 * e);
  return GridField(res, box, std::move(values));
}

}  // namespace rowcol
