#include "rowcol/sdf_network.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "rowcol/binio.hpp"
#include "rowcol/errors.hpp"
#include "rowcol/kernels.hpp"
#include "rowcol/parallel.hpp"
#include "rowcol/rng.hpp"

namespace rowcol {

const char* net_role_name(NetRole role) {
  switch (role) {
    case NetRole::RowView: return "row";
    case NetRole::ColView: return "col";
    case NetRole::Refined: return "refined";
  }
  return "row";
}

NetRole net_role_from_name(const std::string& name) {
  if (name == "row") return NetRole::RowView;
  if (name == "col") return NetRole::ColView;
  if (name == "refined") return NetRole::Refined;
  throw ConfigError("unknown network role '" + name +
                    "' (expected row, col, or refined)");
}

void validate_arch(const NetworkArch& arch) {
  if (arch.n_layers < 2)
    throw ConfigError("network needs at least 2 layers, got " +
                      std::to_string(arch.n_layers));
  if (arch.skip_at < 1 || arch.skip_at >= arch.n_layers)
    throw ConfigError("skip_at must satisfy 1 <= skip_at < n_layers, got " +
                      std::to_string(arch.skip_at) + " with " +
                      std::to_string(arch.n_layers) + " layers");
  if (arch.hidden < 4)
    throw ConfigError("hidden width must be >= 4 so the skip layer keeps a "
                      "channel, got " + std::to_string(arch.hidden));
}

std::size_t layer_in_width(const NetworkArch& arch, std::size_t l) {
  // 0-based layer l is 1-based layer l+1.  The first layer reads the raw
  // coordinate; the layer after the skip reads [activation | raw input],
  // which the skip layer's reduced width makes exactly `hidden` wide.
  return l == 0 ? 3 : arch.hidden;
}

std::size_t layer_out_width(const NetworkArch& arch, std::size_t l) {
  if (l + 1 == arch.n_layers) return 1;
  if (l + 1 == arch.skip_at) return arch.hidden - 3;
  return arch.hidden;
}

namespace {

// i-th of n quasi-uniform unit directions (Fibonacci sphere).
Vec3 fib_direction(std::size_t i, std::size_t n) {
  const double golden = M_PI * (3.0 - std::sqrt(5.0));
  const double z = 1.0 - 2.0 * (static_cast<double>(i) + 0.5) /
                             static_cast<double>(n);
  const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
  const double phi = golden * static_cast<double>(i);
  return Vec3{r * std::cos(phi), r * std::sin(phi), z};
}

}  // namespace

Network init_network(const NetworkArch& arch, std::uint64_t seed, NetRole role,
                     double r0) {
  validate_arch(arch);
  Network net;
  net.arch = arch;
  net.role = role;
  net.seed = seed;

  // Sphere-like start, f(x) ~= |x| - r0, built from the identity
  //   E_d[relu(d.x)] = |x|/4   for d uniform on the unit sphere:
  // the first layer measures K = hidden-3 quasi-uniform ray features
  // relu(d_i.x) (K chosen so all of them survive the skip layer's width
  // reduction; the 3 extra first-layer channels start dead), interior
  // layers carry them with a near-identity map (ReLU is exact on the
  // nonnegative carried values), and the output layer averages with
  // constant weight 4/K and bias -r0.  Quadrature over the Fibonacci
  // directions is what makes the gradient near-radial at finite width —
  // i.i.d. random directions would leave several degrees of direction
  // noise.  Small per-seed noise breaks symmetry for training; biases stay
  // zero so f(0) = -r0 exactly.
  Rng rng(seed);
  const std::size_t L = arch.n_layers;
  const std::size_t K = arch.hidden - 3;
  net.weights.reserve(L);
  net.biases.reserve(L);
  for (std::size_t l = 0; l < L; ++l) {
    const std::size_t in = layer_in_width(arch, l);
    const std::size_t out = layer_out_width(arch, l);
    Array w(out, in);
    Array b(1, out);
    if (l == 0) {
      for (std::size_t i = 0; i < out; ++i) {
        const Vec3 d = i < K ? fib_direction(i, K) : Vec3{0, 0, 0};
        for (std::size_t j = 0; j < 3; ++j)
          w.at(i, j) = d[static_cast<int>(j)] + rng.normal(0.0, 1e-4);
      }
    } else if (l + 1 == L) {
      const double w0 = 4.0 / static_cast<double>(K);
      for (std::size_t e = 0; e < w.size(); ++e)
        w.data[e] = w0 + rng.normal(0.0, 1e-5);
      b.data[0] = -r0;
    } else {
      for (std::size_t i = 0; i < out; ++i)
        for (std::size_t j = 0; j < in; ++j)
          w.at(i, j) = (i == j && i < K ? 1.0 : 0.0) + rng.normal(0.0, 1e-4);
    }
    net.weights.push_back(std::move(w));
    net.biases.push_back(std::move(b));
  }

  // The raw-input columns appended by the skip sit in the last 3 input slots
  // of layer skip_at+1; zeroing them makes the fresh net ignore the
  // re-injected coordinate (drawn-then-zeroed so the RNG stream layout does
  // not depend on this rule).
  Array& wskip = net.weights[arch.skip_at];  // 0-based index == skip_at
  const std::size_t in = wskip.cols;
  for (std::size_t i = 0; i < wskip.rows; ++i)
    for (std::size_t j = in - 3; j < in; ++j) wskip.at(i, j) = 0.0;

  return net;
}

namespace {

// One forward chunk, mirroring the tape ops bit-for-bit: matmul_nt via the
// shared kernel, then bias add, ReLU as x > 0 ? x : 0, and the skip concat.
void forward_chunk(const Network& net, const Array& x, std::vector<double>& out,
                   std::size_t out_base) {
  const std::size_t L = net.arch.n_layers;
  Array h = x;
  for (std::size_t l = 0; l < L; ++l) {
    Array z = rowcol::matmul_nt(h, net.weights[l]);
    const Array& b = net.biases[l];
    const bool act = l + 1 < L;
    par::for_index(z.rows, [&](std::size_t i) {
      double* zi = z.row(i);
      for (std::size_t j = 0; j < z.cols; ++j) {
        const double v = zi[j] + b.data[j];
        zi[j] = act ? (v > 0.0 ? v : 0.0) : v;
      }
    });
    if (l + 1 == net.arch.skip_at) {
      Array cat(z.rows, z.cols + 3);
      par::for_index(z.rows, [&](std::size_t i) {
        double* ci = cat.row(i);
        std::memcpy(ci, z.row(i), z.cols * sizeof(double));
        std::memcpy(ci + z.cols, x.row(i), 3 * sizeof(double));
      });
      h = std::move(cat);
    } else {
      h = std::move(z);
    }
  }
  for (std::size_t i = 0; i < h.rows; ++i) out[out_base + i] = h.data[i];
}

}  // namespace

std::vector<double> eval_sdf_batch(const Network& net,
                                   const std::vector<Vec3>& xs) {
  constexpr std::size_t kChunk = 16384;
  std::vector<double> out(xs.size());
  for (std::size_t base = 0; base < xs.size(); base += kChunk) {
    const std::size_t n = std::min(kChunk, xs.size() - base);
    Array x(n, 3);
    for (std::size_t i = 0; i < n; ++i) {
      const Vec3& p = xs[base + i];
      double* xi = x.row(i);
      xi[0] = p.x;
      xi[1] = p.y;
      xi[2] = p.z;
    }
    forward_chunk(net, x, out, base);
  }
  return out;
}

double eval_sdf(const Network& net, const Vec3& x) {
  std::vector<double> out(1);
  Array xa(1, 3);
  xa.data = {x.x, x.y, x.z};
  forward_chunk(net, xa, out, 0);
  return out[0];
}

NetGraph build_sdf_graph(Tape& t, const Network& net, Value x) {
  const std::size_t L = net.arch.n_layers;
  NetGraph g;
  g.weights.reserve(L);
  g.biases.reserve(L);
  Value h = x;
  for (std::size_t l = 0; l < L; ++l) {
    Value w = t.leaf(net.weights[l]);
    Value b = t.leaf(net.biases[l]);
    g.weights.push_back(w);
    g.biases.push_back(b);
    Value z = t.add_row(t.matmul_nt(h, w), b);
    Value a = (l + 1 < L) ? t.relu(z) : z;
    h = (l + 1 == net.arch.skip_at) ? t.concat_cols(a, x) : a;
  }
  g.f = h;
  return g;
}

Vec3 spatial_gradient(const Network& net, const Vec3& x) {
  Tape t;
  Array xa(1, 3);
  xa.data = {x.x, x.y, x.z};
  Value xv = t.leaf(std::move(xa));
  // Parameters enter as constants here: only the input gradient is wanted,
  // and build_sdf_graph's leaves would be wasted bookkeeping.
  Value h = xv;
  const std::size_t L = net.arch.n_layers;
  for (std::size_t l = 0; l < L; ++l) {
    Value z = t.add_row(t.matmul_nt(h, t.constant(net.weights[l])),
                        t.constant(net.biases[l]));
    Value a = (l + 1 < L) ? t.relu(z) : z;
    h = (l + 1 == net.arch.skip_at) ? t.concat_cols(a, xv) : a;
  }
  Value g = t.input_gradient(h, xv);
  const Array& gv = g.val();
  return Vec3{gv.data[0], gv.data[1], gv.data[2]};
}

namespace {

constexpr char kNetMagic[] = "rowcol-net";
constexpr int kNetVersion = 1;

void append_f32_array(std::string& blob, const Array& a) {
  for (std::size_t e = 0; e < a.size(); ++e) binio::append_f32(blob, a.data[e]);
}

}  // namespace

void save_network(const std::string& path, const Network& net) {
  validate_arch(net.arch);
  std::ostringstream head;
  head << kNetMagic << " " << kNetVersion << "\n";
  head << "role " << net_role_name(net.role) << "\n";
  head << "seed " << net.seed << "\n";
  head << "arch " << net.arch.n_layers << " " << net.arch.hidden << " "
       << net.arch.skip_at << "\n";
  head << "blob\n";

  std::string blob;
  for (std::size_t l = 0; l < net.arch.n_layers; ++l) {
    append_f32_array(blob, net.weights[l]);
    append_f32_array(blob, net.biases[l]);
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << head.str();
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw IoError("write failed for '" + path + "'");
}

Network load_network(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open network snapshot '" + path + "'");
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != kNetMagic)
    throw IoError("'" + path + "' is not a network snapshot (bad magic)");
  if (version != kNetVersion)
    throw IoError("'" + path + "': unsupported snapshot version " +
                  std::to_string(version));

  Network net;
  std::string key, role;
  if (!(in >> key >> role) || key != "role")
    throw IoError("'" + path + "': expected 'role' line");
  net.role = net_role_from_name(role);
  if (!(in >> key >> net.seed) || key != "seed")
    throw IoError("'" + path + "': expected 'seed' line");
  if (!(in >> key >> net.arch.n_layers >> net.arch.hidden >>
        net.arch.skip_at) ||
      key != "arch")
    throw IoError("'" + path + "': expected 'arch' line");
  try {
    validate_arch(net.arch);
  } catch (const ConfigError& e) {
    throw IoError("'" + path + "': invalid architecture: " + e.what());
  }
  if (!(in >> key) || key != "blob")
    throw IoError("'" + path + "': expected 'blob' separator");
  in.get();  // newline after the separator

  std::string blob((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  std::size_t off = 0;
  const auto take = [&](std::size_t rows, std::size_t cols) {
    Array a(rows, cols);
    for (std::size_t e = 0; e < a.size(); ++e, off += 4) {
      if (off + 4 > blob.size())
        throw IoError("'" + path + "': snapshot blob truncated at byte offset " +
                      std::to_string(off) + " (need " +
                      std::to_string(off + 4) + " bytes)");
      a.data[e] = binio::read_f32(blob, off);
    }
    return a;
  };
  for (std::size_t l = 0; l < net.arch.n_layers; ++l) {
    const std::size_t in_w = layer_in_width(net.arch, l);
    const std::size_t out_w = layer_out_width(net.arch, l);
    net.weights.push_back(take(out_w, in_w));
    net.biases.push_back(take(1, out_w));
  }
  if (off != blob.size())
    throw IoError("'" + path + "': " + std::to_string(blob.size() - off) +
                  " trailing bytes after blob offset " + std::to_string(off));
  return net;
}

}  // namespace rowcol
