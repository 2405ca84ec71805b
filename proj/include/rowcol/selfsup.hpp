#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rowcol/pointcloud.hpp"
#include "rowcol/sdf_network.hpp"
#include "rowcol/vec3.hpp"

namespace rowcol {

// Hyperparameters of the self-supervised per-view fit.
struct SelfSupConfig {
  std::size_t iterations = 10000;
  std::size_t batch = 5000;
  double base_lr = 0.001;
  double lambda_scc = 0.01;    // weight of the gradient-consistency term
  double alpha_nonmfd = 100.0; // sharpness of the near-surface weight
  double lambda_adl = 0.0;     // reserved hook; no loss term is attached
  std::uint64_t seed = 0;
  double eps_pair = 1e-9;      // degenerate-pair guard for the scc term
};

// ConfigError on nonpositive iterations/batch/base_lr/alpha_nonmfd/eps_pair
// or negative loss weights.  (batch <= |queries| is checked by train_view,
// which knows the query set.)
void validate_selfsup_config(const SelfSupConfig& config);

// Squared Euclidean distance between the projected query and its paired
// surface point.
double loss_sdf(const Vec3& x_proj, const Vec3& x_hat);

// 1 - cos(grad, x_proj - x_hat).  Degenerate inputs (pair distance or
// gradient norm under eps_pair) yield nullopt: the sample contributes
// nothing rather than a garbage angle.
std::optional<double> loss_scc(const Vec3& grad, const Vec3& x_proj,
                               const Vec3& x_hat, double eps_pair);

// exp(-alpha |f_val|): per-sample weight confining the scc term to samples
// near the zero level-set.  Requires alpha > 0; never exceeds 1.
double reg_nonmanifold(double f_val, double alpha);

// One row of the training log, written per iteration.
struct LossRow {
  std::size_t iteration = 0;  // 1-based
  double lr = 0.0;
  double loss_total = 0.0;
  double loss_sdf = 0.0;
  double loss_scc_weighted = 0.0;
};
using LossLog = std::vector<LossRow>;

// CSV with header iteration,lr,loss_total,loss_sdf,loss_scc_weighted.
// Values are printed round-trip losslessly, so the bytes are deterministic.
void write_loss_log(const std::string& path, const LossLog& log);

// Per-iteration loss graph over one explicit batch (exposed so gradient
// checks can drive it directly): queries are projected along the field
// gradient and scored with loss_sdf + lambda_scc * reg_nonmanifold *
// loss_scc, all on the tape.  Rows whose gradient norm is under the
// projection guard are excluded; the mean keeps the full batch in the
// denominator so the loss scale does not wobble with the skip count.
struct SelfSupBatchGraph {
  NetGraph net_graph;
  Value loss;               // scalar node the optimizer differentiates
  double loss_total = 0.0;  // eager values; total = sdf + scc_weighted
  double loss_sdf = 0.0;
  double loss_scc_weighted = 0.0;
};
SelfSupBatchGraph build_selfsup_loss(Tape& t, const Network& net,
                                     Array batch_x, Array batch_xhat,
                                     const SelfSupConfig& config);

struct TrainResult {
  Network net;
  LossLog log;
};

// Self-supervised fit: `iterations` Adam steps with cosine-decayed lr; each
// step draws a seeded batch with replacement, projects the queries along the
// (unit-normalized) field gradient, and minimizes the batch mean of
//   loss_sdf + lambda_scc * reg_nonmanifold * loss_scc
// with gradients flowing through the projection, spatial gradient included.
// Samples whose gradient is too small to project are excluded from that
// step's loss.  The explicit `seed` argument is the one used (callers pass
// config.seed or a derived stage seed).  Throws NumericError with a
// diagnostic dump if the loss goes non-finite, ConfigError on bad config or
// batch > |queries|.  When `verbose`, prints progress to stderr.
TrainResult train_view(const QuerySet& queries, const NetworkArch& arch,
                       NetRole role, const SelfSupConfig& config,
                       std::uint64_t seed, bool verbose = false);

}  // namespace rowcol
