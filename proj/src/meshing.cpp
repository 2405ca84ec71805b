#include "rowcol/meshing.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <unordered_map>
#include <utility>

#include "rowcol/errors.hpp"
#include "rowcol/kdtree.hpp"
#include "rowcol/parallel.hpp"
#include "rowcol/rng.hpp"

namespace rowcol {
namespace {

// GCC 11's vectorizer folds double->float->double narrowing chains right
// back out of loops at -O3; the volatile stop keeps the rounding observable.
double f32_snap(double v) {
  volatile float f = static_cast<float>(v);
  return static_cast<double>(f);
}

// Cube corner c sits at offset kCorner[c], edge e joins kEdgeCorner[e].
constexpr int kCorner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                               {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
constexpr int kEdgeCorner[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0},
                                    {4, 5}, {5, 6}, {6, 7}, {7, 4},
                                    {0, 4}, {1, 5}, {2, 6}, {3, 7}};
// The six faces as corner cycles, counterclockwise seen from outside the
// cube, so every cube edge appears in exactly two cycles with opposite
// directions.
constexpr int kFace[6][4] = {{0, 3, 2, 1}, {4, 5, 6, 7}, {0, 1, 5, 4},
                             {2, 3, 7, 6}, {0, 4, 7, 3}, {1, 2, 6, 5}};

// Per-configuration surface patches as triples of vertex slots: 0..11 name
// a crossed cube edge and 12+p the centroid of the config's patch loop p.
// The table is derived once instead of hardcoded: on every face, each
// maximal run of below-iso corners yields one directed segment from the
// run's exit edge to its entry edge.  Each crossed edge then has exactly
// one outgoing and one incoming segment (its two faces traverse it in
// opposite directions), so the segments close into loops.  Ambiguous faces
// (two diagonal corners below iso) resolve to "separate the below-iso
// corners" — a function of the face's corner signs alone, so neighboring
// cells always agree on their shared face and closed surfaces come out
// watertight.  Loop orientation makes right-hand-rule normals point toward
// decreasing field values.
//
// Triangulation: a fan whose interior chords never join two edges of a
// common cube face.  A neighbor can only reproduce a vertex pair whose
// lattice edges both lie on the shared face, so banning co-facial chords
// keeps every triangle edge on at most two triangles (manifold).  Loops
// where every fan root needs a co-facial chord (a face visited twice by
// one loop) are star-triangulated around their centroid instead, which is
// a fresh per-cell vertex no neighbor can collide with.
struct CaseTable {
  std::vector<std::array<int, 3>> tris[256];
  std::vector<std::vector<int>> loops[256];  // loops star-triangulated, by p
};

const CaseTable& mc_table() {
  static const CaseTable table = [] {
    int edge_of[8][8];
    for (auto& row : edge_of) std::fill(row, row + 8, -1);
    bool co_facial[12][12] = {};
    for (int e = 0; e < 12; ++e) {
      edge_of[kEdgeCorner[e][0]][kEdgeCorner[e][1]] = e;
      edge_of[kEdgeCorner[e][1]][kEdgeCorner[e][0]] = e;
    }
    for (const auto& face : kFace) {
      for (int s = 0; s < 4; ++s) {
        for (int u = 0; u < 4; ++u) {
          const int es = edge_of[face[s]][face[(s + 1) & 3]];
          const int eu = edge_of[face[u]][face[(u + 1) & 3]];
          co_facial[es][eu] = true;
        }
      }
    }

    CaseTable t;
    for (int config = 1; config < 255; ++config) {
      const auto inside = [config](int corner) {
        return (config >> corner & 1) != 0;
      };
      int next[12];
      std::fill(next, next + 12, -1);
      for (const auto& face : kFace) {
        for (int s = 0; s < 4; ++s) {
          const int prev = face[(s + 3) & 3];
          if (!inside(face[s]) || inside(prev)) continue;  // not a run start
          int e = s;  // walk to the run's last inside corner
          while (inside(face[(e + 1) & 3])) e = (e + 1) & 3;
          const int exit = edge_of[face[e]][face[(e + 1) & 3]];
          next[exit] = edge_of[prev][face[s]];
        }
      }
      bool used[12] = {};
      for (int e0 = 0; e0 < 12; ++e0) {
        if (next[e0] < 0 || used[e0]) continue;
        std::vector<int> loop;
        for (int e = e0; !used[e]; e = next[e]) {
          used[e] = true;
          loop.push_back(e);
        }
        const std::size_t m = loop.size();
        // Lowest fan root whose chords (root, root+2 .. root+m-2) are all
        // chord-safe; the loop order (and so the winding) is untouched.
        std::size_t root = m;
        for (std::size_t r = 0; r < m && root == m; ++r) {
          bool ok = true;
          for (std::size_t i = 2; i + 1 < m && ok; ++i) {
            ok = !co_facial[loop[r]][loop[(r + i) % m]];
          }
          if (ok) root = r;
        }
        if (root < m) {
          for (std::size_t i = 1; i + 1 < m; ++i) {
            t.tris[config].push_back({loop[root], loop[(root + i) % m],
                                      loop[(root + i + 1) % m]});
          }
        } else {
          const int center = 12 + static_cast<int>(t.loops[config].size());
          for (std::size_t i = 0; i < m; ++i) {
            t.tris[config].push_back(
                {center, loop[i], loop[(i + 1) % m]});
          }
          t.loops[config].push_back(std::move(loop));
        }
      }
    }
    return t;
  }();
  return table;
}

double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c) {
  return 0.5 * norm(cross(b - a, c - a));
}

// Nearest-neighbor distance from every `from` point into `tree`,
// parallelized over queries (results land per-index, so the backend cannot
// change them).
std::vector<double> nn_distances(const std::vector<Vec3>& from,
                                 const KdTree& tree) {
  std::vector<double> d(from.size());
  par::for_index(from.size(),
                 [&](std::size_t i) { d[i] = tree.nearest(from[i]).dist; });
  return d;
}

}  // namespace

GridField evaluate_grid(const SdfField& field, std::size_t res,
                        const Aabb& box) {
  const GridField g = sample_grid(field, {res, res, res}, box);
  std::vector<double> snapped = g.values();
  for (double& v : snapped) v = f32_snap(v);
  return GridField({res, res, res}, box, std::move(snapped));
}

Mesh marching_cubes(const GridField& grid, double iso) {
  const auto& res = grid.res();
  const auto& box = grid.bbox();
  const auto& vals = grid.values();
  const std::size_t rx = res[0], ry = res[1], rz = res[2];

  // Node coordinates per axis, shared by every cell so a lattice edge gets
  // bit-identical vertices no matter which neighbor asks first.
  std::vector<double> coord[3];
  for (int a = 0; a < 3; ++a) {
    coord[a].resize(res[a]);
    for (std::size_t i = 0; i < res[a]; ++i) {
      coord[a][i] = grid_coord(box.lo[a], box.hi[a], res[a], i);
    }
  }

  const auto node = [&](std::size_t i, std::size_t j, std::size_t k) {
    return i + rx * (j + ry * k);
  };

  Mesh mesh;
  // One welded vertex per crossed lattice edge, keyed by 3*node + axis.
  std::unordered_map<std::uint64_t, std::size_t> edge_vertex;
  const auto vertex_on_edge = [&](std::size_t i, std::size_t j, std::size_t k,
                                  int ca, int cb) {
    std::size_t na[3] = {i + static_cast<std::size_t>(kCorner[ca][0]),
                         j + static_cast<std::size_t>(kCorner[ca][1]),
                         k + static_cast<std::size_t>(kCorner[ca][2])};
    std::size_t nb[3] = {i + static_cast<std::size_t>(kCorner[cb][0]),
                         j + static_cast<std::size_t>(kCorner[cb][1]),
                         k + static_cast<std::size_t>(kCorner[cb][2])};
    int axis = 0;
    while (na[axis] == nb[axis]) ++axis;
    if (na[axis] > nb[axis]) std::swap(na, nb);
    const std::uint64_t key =
        3 * static_cast<std::uint64_t>(node(na[0], na[1], na[2])) +
        static_cast<std::uint64_t>(axis);
    const auto found = edge_vertex.find(key);
    if (found != edge_vertex.end()) return found->second;
    const double va = vals[node(na[0], na[1], na[2])];
    const double vb = vals[node(nb[0], nb[1], nb[2])];
    const double t = (iso - va) / (vb - va);
    Vec3 p{coord[0][na[0]], coord[1][na[1]], coord[2][na[2]]};
    p[axis] = std::lerp(coord[axis][na[axis]], coord[axis][nb[axis]], t);
    const std::size_t id = mesh.vertices.size();
    mesh.vertices.push_back(p);
    edge_vertex.emplace(key, id);
    return id;
  };

  const CaseTable& table = mc_table();
  for (std::size_t k = 0; k + 1 < rz; ++k) {
    for (std::size_t j = 0; j + 1 < ry; ++j) {
      for (std::size_t i = 0; i + 1 < rx; ++i) {
        int config = 0;
        for (int c = 0; c < 8; ++c) {
          const double v = vals[node(i + static_cast<std::size_t>(kCorner[c][0]),
                                     j + static_cast<std::size_t>(kCorner[c][1]),
                                     k + static_cast<std::size_t>(kCorner[c][2]))];
          if (v < iso) config |= 1 << c;
        }
        constexpr std::size_t kUnset = static_cast<std::size_t>(-1);
        std::array<std::size_t, 4> centroid_id;
        centroid_id.fill(kUnset);
        const auto slot_vertex = [&](int slot) -> std::size_t {
          if (slot < 12) {
            return vertex_on_edge(i, j, k, kEdgeCorner[slot][0],
                                  kEdgeCorner[slot][1]);
          }
          const std::size_t p = static_cast<std::size_t>(slot - 12);
          if (centroid_id[p] == kUnset) {
            Vec3 c{0.0, 0.0, 0.0};
            const auto& loop = table.loops[config][p];
            for (const int e : loop) {
              const std::size_t id =
                  vertex_on_edge(i, j, k, kEdgeCorner[e][0], kEdgeCorner[e][1]);
              c += mesh.vertices[id];
            }
            centroid_id[p] = mesh.vertices.size();
            mesh.vertices.push_back(c / static_cast<double>(loop.size()));
          }
          return centroid_id[p];
        };
        for (const auto& tr : table.tris[config]) {
          std::array<std::size_t, 3> ids;
          for (int s = 0; s < 3; ++s) {
            ids[static_cast<std::size_t>(s)] =
                slot_vertex(tr[static_cast<std::size_t>(s)]);
          }
          // Iso levels passing exactly through lattice nodes can collapse a
          // patch corner onto a node; drop the resulting zero-area slivers.
          const Vec3& a = mesh.vertices[ids[0]];
          const Vec3& b = mesh.vertices[ids[1]];
          const Vec3& c = mesh.vertices[ids[2]];
          if (norm2(cross(b - a, c - a)) == 0.0) continue;
          mesh.triangles.push_back(ids);
        }
      }
    }
  }
  return mesh;
}

double mesh_area(const Mesh& mesh) {
  double total = 0.0;
  for (const auto& tr : mesh.triangles) {
    total += triangle_area(mesh.vertices[tr[0]], mesh.vertices[tr[1]],
                           mesh.vertices[tr[2]]);
  }
  return total;
}

std::vector<Vec3> sample_mesh_surface(const Mesh& mesh, std::size_t n,
                                      std::uint64_t seed) {
  if (mesh.triangles.empty()) {
    throw ConfigError("meshing: cannot sample an empty mesh");
  }
  std::vector<double> cum(mesh.triangles.size());
  double total = 0.0;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tr = mesh.triangles[t];
    total += triangle_area(mesh.vertices[tr[0]], mesh.vertices[tr[1]],
                           mesh.vertices[tr[2]]);
    cum[t] = total;
  }
  if (!(total > 0.0)) {
    throw ConfigError("meshing: mesh has zero surface area");
  }

  Rng rng(seed);
  std::vector<Vec3> out(n);
  for (std::size_t s = 0; s < n; ++s) {
    const double u = rng.uniform() * total;
    std::size_t t = static_cast<std::size_t>(
        std::upper_bound(cum.begin(), cum.end(), u) - cum.begin());
    t = std::min(t, cum.size() - 1);
    double b1 = rng.uniform();
    double b2 = rng.uniform();
    if (b1 + b2 > 1.0) {  // fold the square onto the triangle
      b1 = 1.0 - b1;
      b2 = 1.0 - b2;
    }
    const auto& tr = mesh.triangles[t];
    const Vec3& a = mesh.vertices[tr[0]];
    out[s] = a + b1 * (mesh.vertices[tr[1]] - a) +
             b2 * (mesh.vertices[tr[2]] - a);
  }
  return out;
}

MetricReport compute_metrics(const std::vector<Vec3>& recon,
                             const std::vector<Vec3>& gt, std::uint64_t seed,
                             const std::string& space) {
  if (recon.empty() || gt.empty()) {
    throw ConfigError("metrics: point sets must be non-empty");
  }
  const KdTree gt_tree(gt);
  const KdTree recon_tree(recon);
  const std::vector<double> d_ab = nn_distances(recon, gt_tree);
  const std::vector<double> d_ba = nn_distances(gt, recon_tree);

  double sum_ab = 0.0, sumsq_ab = 0.0, max_ab = 0.0;
  for (const double d : d_ab) {
    sum_ab += d;
    sumsq_ab += d * d;
    max_ab = std::max(max_ab, d);
  }
  double sum_ba = 0.0, max_ba = 0.0;
  for (const double d : d_ba) {
    sum_ba += d;
    max_ba = std::max(max_ba, d);
  }
  const double mean_ab = sum_ab / static_cast<double>(d_ab.size());
  const double mean_ba = sum_ba / static_cast<double>(d_ba.size());

  MetricReport r;
  r.cd = 0.5 * (mean_ab + mean_ba);
  r.hd = std::max(max_ab, max_ba);
  r.mad = mean_ab;
  r.rmse = std::sqrt(sumsq_ab / static_cast<double>(d_ab.size()));
  r.n_samples = recon.size();
  r.n_gt = gt.size();
  r.seed = seed;
  r.space = space;
  return r;
}

std::string format_metric_report(const MetricReport& report) {
  char buf[512];
  std::string out;
  out += "metric report\n";
  std::snprintf(buf, sizeof buf, "  space:         %s\n",
                report.space.c_str());
  out += buf;
  std::snprintf(buf, sizeof buf, "  recon samples: %zu\n", report.n_samples);
  out += buf;
  std::snprintf(buf, sizeof buf, "  gt samples:    %zu\n", report.n_gt);
  out += buf;
  std::snprintf(buf, sizeof buf, "  seed:          %llu\n",
                static_cast<unsigned long long>(report.seed));
  out += buf;
  out +=
      "  conventions (d(p,Q) = min over q in Q of |p-q|, exact nearest"
      " neighbors):\n"
      "    cd   = 0.5*(mean_recon d(a,gt) + mean_gt d(b,recon))\n"
      "    hd   = max(max_recon d(a,gt), max_gt d(b,recon))\n"
      "    mad  = mean_recon d(a,gt)\n"
      "    rmse = sqrt(mean_recon d(a,gt)^2)\n";
  std::snprintf(buf, sizeof buf,
                "  values:\n    cd   = %.17g\n    hd   = %.17g\n"
                "    mad  = %.17g\n    rmse = %.17g\n",
                report.cd, report.hd, report.mad, report.rmse);
  out += buf;
  out += "  csv: cd,hd,mad,rmse,n_samples,n_gt,seed,space\n";
  std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%zu,%zu,%llu,%s\n",
                report.cd, report.hd, report.mad, report.rmse,
                report.n_samples, report.n_gt,
                static_cast<unsigned long long>(report.seed),
                report.space.c_str());
  out += buf;
  return out;
}

void write_metric_report(const std::string& path,
                         const MetricReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  const std::string text = format_metric_report(report);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("write failed for '" + path + "'");
}

void save_mesh_obj(const std::string& path, const Mesh& mesh) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  char buf[160];
  for (const Vec3& v : mesh.vertices) {
    std::snprintf(buf, sizeof buf, "v %.17g %.17g %.17g\n", v.x, v.y, v.z);
    out << buf;
  }
  for (const auto& tr : mesh.triangles) {
    std::snprintf(buf, sizeof buf, "f %zu %zu %zu\n", tr[0] + 1, tr[1] + 1,
                  tr[2] + 1);
    out << buf;
  }
  if (!out) throw IoError("write failed for '" + path + "'");
}

Mesh load_mesh_obj(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open mesh '" + path + "'");
  Mesh mesh;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto fail = [&](const std::string& what) {
      throw IoError("'" + path + "': " + what + " at line " +
                    std::to_string(line_no));
    };
    // Tolerate blank lines (and the \r of CRLF files, which " %c" skips).
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    double x, y, z;
    unsigned long long a, b, c;
    char extra;
    if (line[0] == 'v') {
      if (std::sscanf(line.c_str(), "v %lf %lf %lf %c", &x, &y, &z, &extra) !=
          3) {
        fail("malformed vertex line");
      }
      mesh.vertices.push_back({x, y, z});
    } else if (line[0] == 'f') {
      if (std::sscanf(line.c_str(), "f %llu %llu %llu %c", &a, &b, &c,
                      &extra) != 3) {
        fail("malformed face line");
      }
      if (a < 1 || b < 1 || c < 1) fail("face index must be 1-based");
      mesh.triangles.push_back({static_cast<std::size_t>(a - 1),
                                static_cast<std::size_t>(b - 1),
                                static_cast<std::size_t>(c - 1)});
    } else {
      fail("unsupported OBJ line");
    }
  }
  for (const auto& tr : mesh.triangles) {
    for (const std::size_t idx : tr) {
      if (idx >= mesh.vertices.size()) {
        throw IoError("'" + path + "': face index " + std::to_string(idx + 1) +
                      " out of range (" + std::to_string(mesh.vertices.size()) +
                      " vertices)");
      }
    }
  }
  return mesh;
}

}  // namespace rowcol
