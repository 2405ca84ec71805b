#include "rowcol/refine.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "rowcol/binio.hpp"
#include "rowcol/errors.hpp"
#include "rowcol/hash.hpp"
#include "rowcol/optim.hpp"
#include "rowcol/rng.hpp"
#include "rowcol/tape.hpp"

namespace rowcol {

void validate_refine_config(const RefineConfig& c) {
  if (c.n_uniform == 0) throw ConfigError("refine: n_uniform must be >= 1");
  if (c.n_surface == 0) throw ConfigError("refine: n_surface must be >= 1");
  if (!(c.sigma_refine > 0.0))
    throw ConfigError("refine: sigma_refine must be > 0");
  if (c.tau_surf < 0.0) throw ConfigError("refine: tau_surf must be >= 0");
  if (c.lambda_mfd < 0.0) throw ConfigError("refine: lambda_mfd must be >= 0");
  if (c.iterations == 0) throw ConfigError("refine: iterations must be >= 1");
  if (c.batch == 0) throw ConfigError("refine: batch must be >= 1");
  if (!(c.base_lr > 0.0)) throw ConfigError("refine: base_lr must be > 0");
}

namespace {

constexpr std::size_t kSampleChunk = 65536;
// Rejection sampling gives up when fewer than 1e-4 of the first 1e7
// candidates are accepted; the field then has no surface inside the cube.
constexpr std::size_t kCandidateBudget = 10000000;
constexpr double kMinAcceptance = 1e-4;

const Vec3 kCubeLo{-1.0, -1.0, -1.0};
const Vec3 kCubeHi{1.0, 1.0, 1.0};

}  // namespace

std::vector<RefineSample> sample_refinement_set(const SdfField& field,
                                                const RefineConfig& config) {
  validate_refine_config(config);
  Rng rng(config.seed);
  std::vector<RefineSample> out;
  out.reserve(config.n_uniform + config.n_surface);

  std::vector<Vec3> pts;
  std::vector<double> vals;

  // Uniform block: positions first, then one batched field evaluation.
  for (std::size_t done = 0; done < config.n_uniform;) {
    const std::size_t k = std::min(kSampleChunk, config.n_uniform - done);
    pts.resize(k);
    for (auto& p : pts) p = rng.uniform_vec3(kCubeLo, kCubeHi);
    field.eval_batch(pts, vals);
    for (std::size_t e = 0; e < k; ++e)
      out.push_back(RefineSample{pts[e], vals[e], false});
    done += k;
  }

  // Near-surface block: uniform candidates thinned by the Gaussian of their
  // field value.  The extra 4-sigma clip turns the soft preference into a
  // hard guarantee on |target|.
  const double inv_2s2 =
      1.0 / (2.0 * config.sigma_refine * config.sigma_refine);
  const double clip = 4.0 * config.sigma_refine;
  std::size_t accepted = 0, drawn = 0;
  bool budget_checked = false;
  while (accepted < config.n_surface) {
    pts.resize(kSampleChunk);
    for (auto& p : pts) p = rng.uniform_vec3(kCubeLo, kCubeHi);
    field.eval_batch(pts, vals);
    for (std::size_t e = 0;
         e < kSampleChunk && accepted < config.n_surface; ++e) {
      ++drawn;
      const double t = vals[e];
      const double u = rng.uniform();
      if (std::fabs(t) <= clip && u < std::exp(-t * t * inv_2s2)) {
        out.push_back(RefineSample{pts[e], t, true});
        ++accepted;
      }
      if (!budget_checked && drawn >= kCandidateBudget) {
        budget_checked = true;
        if (static_cast<double>(accepted) <
            kMinAcceptance * static_cast<double>(drawn))
          throw NumericError(
              "refine: degenerate field: accepted " +
              std::to_string(accepted) + " of " + std::to_string(drawn) +
              " candidates; the field has no surface inside the cube");
      }
    }
  }
  return out;
}

double loss_supervised(double pred, double target, bool near_surface,
                       double lambda_mfd, double tau_surf) {
  double loss = std::fabs(pred - target);
  if (near_surface && std::fabs(target) <= tau_surf)
    loss += lambda_mfd * std::fabs(pred);
  return loss;
}

void write_refine_loss_log(const std::string& path, const RefineLossLog& log) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open loss log '" + path + "' for writing");
  out << "iteration,lr,loss_total,loss_l1,loss_mfd_weighted\n";
  char buf[256];
  for (const RefineLossRow& r : log) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g,%.17g\n",
                  r.iteration, r.lr, r.loss_total, r.loss_l1,
                  r.loss_mfd_weighted);
    out << buf;
  }
  if (!out) throw IoError("write failed for loss log '" + path + "'");
}

namespace {

std::string dump_diagnostics(std::size_t iteration, double lr, double total,
                             double l1, double mfd, const Array& f,
                             const Network& net) {
  double fmin = 1e300, fmax = -1e300;
  for (double v : f.data) {
    fmin = std::min(fmin, v);
    fmax = std::max(fmax, v);
  }
  double wmax = 0.0;
  for (const Array& w : net.weights)
    for (double v : w.data) wmax = std::max(wmax, std::fabs(v));
  std::ostringstream os;
  os.precision(17);
  os << "refine: non-finite loss at iteration " << iteration << " (lr " << lr
     << "): total " << total << ", l1 " << l1 << ", mfd_weighted " << mfd
     << "; f range [" << fmin << ", " << fmax << "], max |weight| " << wmax;
  return os.str();
}

}  // namespace

RefineBatchGraph build_refine_loss(Tape& t, const Network& net, Array batch_x,
                                   Array batch_target, Array batch_mask,
                                   const RefineConfig& config) {
  const std::size_t B = batch_x.rows;
  const double inv_batch = 1.0 / static_cast<double>(B);
  RefineBatchGraph bg;

  Value x = t.constant(std::move(batch_x));
  bg.net_graph = build_sdf_graph(t, net, x);
  Value target = t.constant(std::move(batch_target));
  Value mask = t.constant(std::move(batch_mask));

  Value l1_row = t.abs(t.sub(bg.net_graph.f, target));
  Value mfd_row =
      t.scale(t.mul(mask, t.abs(bg.net_graph.f)), config.lambda_mfd);
  bg.loss = t.scale(t.sum_all(t.add(l1_row, mfd_row)), inv_batch);
  Value l1_part = t.scale(t.sum_all(l1_row), inv_batch);

  bg.loss_total = bg.loss.val().data[0];
  bg.loss_l1 = l1_part.val().data[0];
  bg.loss_mfd_weighted = bg.loss_total - bg.loss_l1;
  return bg;
}

RefineResult refine_sdf(const std::vector<RefineSample>& samples,
                        const NetworkArch& arch, const RefineConfig& config,
                        std::uint64_t seed, bool verbose) {
  validate_refine_config(config);
  validate_arch(arch);
  const std::size_t n = samples.size();
  if (n == 0) throw ConfigError("refine: empty sample set");
  if (config.batch > n)
    throw ConfigError("refine: batch " + std::to_string(config.batch) +
                      " exceeds sample set size " + std::to_string(n));

  RefineResult result;
  result.net = init_network(arch, stage_seed(seed, "init"), NetRole::Refined);
  Network& net = result.net;
  result.log.reserve(config.iterations);

  std::vector<AdamState> wstate, bstate;
  for (std::size_t l = 0; l < arch.n_layers; ++l) {
    wstate.push_back(make_adam_state(net.weights[l].rows, net.weights[l].cols));
    bstate.push_back(make_adam_state(1, net.biases[l].cols));
  }

  Rng batch_rng(stage_seed(seed, "batches"));
  const std::size_t B = config.batch;

  for (std::size_t it = 0; it < config.iterations; ++it) {
    // Seeded batch with replacement; the manifold gate is data, so it enters
    // the graph as a constant 0/1 column.
    Array bx(B, 3), btarget(B, 1), bmask(B, 1);
    for (std::size_t i = 0; i < B; ++i) {
      const RefineSample& s =
          samples[batch_rng.uniform_int(static_cast<std::uint64_t>(n))];
      double* xi = bx.row(i);
      xi[0] = s.x.x;
      xi[1] = s.x.y;
      xi[2] = s.x.z;
      btarget.data[i] = s.target;
      bmask.data[i] =
          (s.near_surface && std::fabs(s.target) <= config.tau_surf) ? 1.0
                                                                     : 0.0;
    }

    Tape t;
    RefineBatchGraph bg = build_refine_loss(t, net, std::move(bx),
                                            std::move(btarget),
                                            std::move(bmask), config);
    NetGraph& ng = bg.net_graph;

    const double lr =
        cosine_lr(static_cast<long long>(it),
                  static_cast<long long>(config.iterations), config.base_lr);
    const double total_v = bg.loss_total;
    const double l1_v = bg.loss_l1;
    const double mfd_v = bg.loss_mfd_weighted;
    if (!std::isfinite(total_v))
      throw NumericError(
          dump_diagnostics(it + 1, lr, total_v, l1_v, mfd_v, ng.f.val(), net));

    t.backward(bg.loss);
    for (std::size_t l = 0; l < arch.n_layers; ++l) {
      adam_update(net.weights[l], ng.weights[l].grad(), wstate[l], lr);
      adam_update(net.biases[l], ng.biases[l].grad(), bstate[l], lr);
    }

    result.log.push_back(RefineLossRow{it + 1, lr, total_v, l1_v, mfd_v});
    if (verbose && ((it + 1) % 200 == 0 || it + 1 == config.iterations))
      std::fprintf(stderr,
                   "  [refine] iter %zu/%zu  loss %.6g  (l1 %.6g, mfd %.6g)\n",
                   it + 1, config.iterations, total_v, l1_v, mfd_v);
  }
  return result;
}

namespace {

constexpr char kSampleMagic[4] = {'R', 'C', 'S', 'S'};
constexpr std::uint32_t kSampleVersion = 1;
// Header: magic(4) + version(4) + count(8).
constexpr std::size_t kSampleHeader = 16;
// Per sample: 3 f32 position + f32 target + u8 flag.
constexpr std::size_t kSampleBytes = 17;
// Memory guard when reading untrusted count fields.
constexpr std::uint64_t kMaxSampleCount = 1ull << 26;

}  // namespace

void save_refine_samples(const std::string& path,
                         const std::vector<RefineSample>& samples) {
  std::string buf;
  buf.reserve(kSampleHeader + kSampleBytes * samples.size());
  buf.append(kSampleMagic, 4);
  binio::append_u32(buf, kSampleVersion);
  binio::append_u64(buf, static_cast<std::uint64_t>(samples.size()));
  for (const RefineSample& s : samples) {
    binio::append_f32(buf, s.x.x);
    binio::append_f32(buf, s.x.y);
    binio::append_f32(buf, s.x.z);
    binio::append_f32(buf, s.target);
    buf.push_back(s.near_surface ? static_cast<char>(1)
                                 : static_cast<char>(0));
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("write failed for '" + path + "'");
}

std::vector<RefineSample> load_refine_samples(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open sample cache '" + path + "'");
  std::string buf((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());
  const auto fail = [&](std::size_t off, const std::string& what) {
    throw IoError("'" + path + "': " + what + " at byte offset " +
                  std::to_string(off));
  };
  if (buf.size() < kSampleHeader) fail(buf.size(), "truncated sample header");
  if (std::memcmp(buf.data(), kSampleMagic, 4) != 0)
    fail(0, "bad magic (want RCSS)");
  const std::uint32_t version = binio::read_u32(buf, 4);
  if (version != kSampleVersion)
    fail(4, "unsupported version " + std::to_string(version));
  const std::uint64_t count = binio::read_u64(buf, 8);
  if (count > kMaxSampleCount) fail(8, "sample count too large");

  const std::size_t want =
      kSampleHeader + kSampleBytes * static_cast<std::size_t>(count);
  if (buf.size() < want)
    fail(buf.size(),
         "truncated samples (need " + std::to_string(want) + " bytes total)");
  if (buf.size() > want) fail(want, "trailing bytes after samples");

  std::vector<RefineSample> samples(static_cast<std::size_t>(count));
  std::size_t off = kSampleHeader;
  for (auto& s : samples) {
    s.x.x = binio::read_f32(buf, off);
    s.x.y = binio::read_f32(buf, off + 4);
    s.x.z = binio::read_f32(buf, off + 8);
    s.target = binio::read_f32(buf, off + 12);
    const unsigned char flag = static_cast<unsigned char>(buf[off + 16]);
    if (flag > 1) fail(off + 16, "invalid near-surface flag");
    s.near_surface = flag == 1;
    off += kSampleBytes;
  }
  return samples;
}

}  // namespace rowcol
