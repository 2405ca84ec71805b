#include "rowcol/selfsup.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "rowcol/errors.hpp"
#include "rowcol/hash.hpp"
#include "rowcol/optim.hpp"
#include "rowcol/rng.hpp"
#include "rowcol/tape.hpp"

namespace rowcol {

void validate_selfsup_config(const SelfSupConfig& c) {
  if (c.iterations == 0) throw ConfigError("selfsup: iterations must be >= 1");
  if (c.batch == 0) throw ConfigError("selfsup: batch must be >= 1");
  if (!(c.base_lr > 0.0)) throw ConfigError("selfsup: base_lr must be > 0");
  if (c.lambda_scc < 0.0) throw ConfigError("selfsup: lambda_scc must be >= 0");
  if (c.lambda_adl < 0.0) throw ConfigError("selfsup: lambda_adl must be >= 0");
  if (!(c.alpha_nonmfd > 0.0))
    throw ConfigError("selfsup: alpha_nonmfd must be > 0");
  if (!(c.eps_pair > 0.0)) throw ConfigError("selfsup: eps_pair must be > 0");
}

double loss_sdf(const Vec3& x_proj, const Vec3& x_hat) {
  return norm2(x_proj - x_hat);
}

std::optional<double> loss_scc(const Vec3& grad, const Vec3& x_proj,
                               const Vec3& x_hat, double eps_pair) {
  const Vec3 d = x_proj - x_hat;
  const double dn = norm(d);
  const double gn = norm(grad);
  if (dn < eps_pair || gn < eps_pair) return std::nullopt;
  return 1.0 - dot(grad, d) / (gn * dn);
}

double reg_nonmanifold(double f_val, double alpha) {
  return std::exp(-alpha * std::fabs(f_val));
}

void write_loss_log(const std::string& path, const LossLog& log) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open loss log '" + path + "' for writing");
  out << "iteration,lr,loss_total,loss_sdf,loss_scc_weighted\n";
  char buf[256];
  for (const LossRow& r : log) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g,%.17g\n",
                  r.iteration, r.lr, r.loss_total, r.loss_sdf,
                  r.loss_scc_weighted);
    out << buf;
  }
  if (!out) throw IoError("write failed for loss log '" + path + "'");
}

namespace {

Array column_const(std::size_t rows, double v) {
  Array a(rows, 1);
  for (double& e : a.data) e = v;
  return a;
}

std::string dump_diagnostics(std::size_t iteration, double lr, double total,
                             double sdf, double scc, const Array& f,
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
  os << "selfsup: non-finite loss at iteration " << iteration << " (lr " << lr
     << "): total " << total << ", sdf " << sdf << ", scc_weighted " << scc
     << "; f range [" << fmin << ", " << fmax << "], max |weight| " << wmax;
  return os.str();
}

}  // namespace

SelfSupBatchGraph build_selfsup_loss(Tape& t, const Network& net,
                                     Array batch_x, Array batch_xhat,
                                     const SelfSupConfig& config) {
  const std::size_t B = batch_x.rows;
  const double inv_batch = 1.0 / static_cast<double>(B);
  SelfSupBatchGraph bg;

  Value x = t.constant(std::move(batch_x));
  Value xhat = t.constant(std::move(batch_xhat));
  bg.net_graph = build_sdf_graph(t, net, x);
  Value f = bg.net_graph.f;

  // Projection x' = x - f(x) * grad/|grad| with the gradient taken through
  // the tape, so parameter updates see the full second-order path.
  Value g = t.input_gradient(f, x);
  Value gnorm = t.sqrt(t.row_dot(g, g));
  Value valid =
      t.relu_mask(t.sub(gnorm, t.constant(column_const(B, kProjectEpsGrad))));
  Value ghat = t.mul_col(g, t.safe_recip(gnorm, kProjectEpsGrad));
  Value xproj = t.sub(x, t.mul_col(ghat, f));

  Value diff = t.sub(xproj, xhat);
  Value sdf_row = t.row_dot(diff, diff);

  // Gradient-consistency term, masked out for degenerate pairs.
  Value dnorm = t.sqrt(sdf_row);
  Value eps_col = t.constant(column_const(B, config.eps_pair));
  Value scc_mask = t.mul(t.relu_mask(t.sub(dnorm, eps_col)),
                         t.relu_mask(t.sub(gnorm, eps_col)));
  Value cosv = t.mul(t.row_dot(g, diff),
                     t.mul(t.safe_recip(gnorm, config.eps_pair),
                           t.safe_recip(dnorm, config.eps_pair)));
  Value scc_row =
      t.mul(scc_mask, t.sub(t.constant(column_const(B, 1.0)), cosv));
  Value r_nonmfd = t.exp(t.scale(t.abs(f), -config.alpha_nonmfd));
  Value scc_w_row = t.scale(t.mul(r_nonmfd, scc_row), config.lambda_scc);

  Value total_row = t.mul(valid, t.add(sdf_row, scc_w_row));
  bg.loss = t.scale(t.sum_all(total_row), inv_batch);
  Value sdf_part = t.scale(t.sum_all(t.mul(valid, sdf_row)), inv_batch);

  bg.loss_total = bg.loss.val().data[0];
  bg.loss_sdf = sdf_part.val().data[0];
  bg.loss_scc_weighted = bg.loss_total - bg.loss_sdf;
  return bg;
}

TrainResult train_view(const QuerySet& queries, const NetworkArch& arch,
                       NetRole role, const SelfSupConfig& config,
                       std::uint64_t seed, bool verbose) {
  validate_selfsup_config(config);
  validate_arch(arch);
  const std::size_t n = queries.samples.size();
  if (n == 0) throw ConfigError("selfsup: empty query set");
  if (config.batch > n)
    throw ConfigError("selfsup: batch " + std::to_string(config.batch) +
                      " exceeds query set size " + std::to_string(n));

  TrainResult result;
  result.net = init_network(arch, stage_seed(seed, "init"), role);
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
    // Seeded batch with replacement.
    Array bx(B, 3), bhat(B, 3);
    for (std::size_t i = 0; i < B; ++i) {
      const QuerySample& s =
          queries.samples[batch_rng.uniform_int(static_cast<std::uint64_t>(n))];
      double* xi = bx.row(i);
      double* hi = bhat.row(i);
      xi[0] = s.query.x;
      xi[1] = s.query.y;
      xi[2] = s.query.z;
      hi[0] = s.nearest.x;
      hi[1] = s.nearest.y;
      hi[2] = s.nearest.z;
    }

    Tape t;
    SelfSupBatchGraph bg =
        build_selfsup_loss(t, net, std::move(bx), std::move(bhat), config);
    NetGraph& ng = bg.net_graph;

    const double lr =
        cosine_lr(static_cast<long long>(it),
                  static_cast<long long>(config.iterations), config.base_lr);
    const double total_v = bg.loss_total;
    const double sdf_v = bg.loss_sdf;
    const double scc_v = bg.loss_scc_weighted;
    if (!std::isfinite(total_v))
      throw NumericError(dump_diagnostics(it + 1, lr, total_v, sdf_v, scc_v,
                                          ng.f.val(), net));

    t.backward(bg.loss);
    for (std::size_t l = 0; l < arch.n_layers; ++l) {
      adam_update(net.weights[l], ng.weights[l].grad(), wstate[l], lr);
      adam_update(net.biases[l], ng.biases[l].grad(), bstate[l], lr);
    }

    result.log.push_back(LossRow{it + 1, lr, total_v, sdf_v, scc_v});
    if (verbose && ((it + 1) % 200 == 0 || it + 1 == config.iterations))
      std::fprintf(stderr, "  [fit %s] iter %zu/%zu  loss %.6g  (sdf %.6g, scc %.6g)\n",
                   net_role_name(role), it + 1, config.iterations, total_v,
                   sdf_v, scc_v);
  }
  return result;
}

}  // namespace rowcol
