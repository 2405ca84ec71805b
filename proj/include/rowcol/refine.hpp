#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rowcol/field.hpp"
#include "rowcol/sdf_network.hpp"
#include "rowcol/tape.hpp"
#include "rowcol/vec3.hpp"

namespace rowcol {

// One supervised training pair for the refinement stage: a query position in
// the normalized cube and the fused field's value there.  near_surface marks
// samples produced by the Gaussian rejection pass, which also guarantees
// |target| <= 4*sigma_refine for them.
struct RefineSample {
  Vec3 x;
  double target = 0.0;
  bool near_surface = false;
};

struct RefineConfig {
  std::size_t n_uniform = 100000;  // uniform cube samples
  std::size_t n_surface = 400000;  // Gaussian near-surface samples
  double sigma_refine = 0.05;      // rejection bandwidth
  double tau_surf = 0.01;          // |target| gate for the manifold term
  double lambda_mfd = 0.6;         // manifold regularizer weight
  std::size_t iterations = 10000;
  std::size_t batch = 5000;
  double base_lr = 0.001;
  std::uint64_t seed = 0;  // drives sample_refinement_set
};

void validate_refine_config(const RefineConfig& config);

// Draws n_uniform points uniformly in [-1,1]^3, then n_surface points by
// rejection: uniform candidates accepted with probability
// exp(-target^2 / (2 sigma^2)) and |target| <= 4 sigma.  Targets are the
// field values at the sampled positions, recorded exactly; the output is
// deterministic per config.seed (uniform block first, then near-surface).
// Throws NumericError when fewer than 1e-4 of a 10^7-candidate budget is
// accepted (the field has no surface inside the cube).
std::vector<RefineSample> sample_refinement_set(const SdfField& field,
                                                const RefineConfig& config);

// L1 data term plus the manifold regularizer: |pred - target|, and for
// near-surface samples whose |target| <= tau_surf additionally
// lambda_mfd * |pred| (the refined field should vanish on the surface).
double loss_supervised(double pred, double target, bool near_surface,
                       double lambda_mfd, double tau_surf);

struct RefineLossRow {
  std::size_t iteration = 0;  // 1-based
  double lr = 0.0;
  double loss_total = 0.0;
  double loss_l1 = 0.0;
  double loss_mfd_weighted = 0.0;
};
using RefineLossLog = std::vector<RefineLossRow>;

// CSV with header iteration,lr,loss_total,loss_l1,loss_mfd_weighted; %.17g
// formatting makes the bytes deterministic.
void write_refine_loss_log(const std::string& path, const RefineLossLog& log);

struct RefineBatchGraph {
  NetGraph net_graph;
  Value loss;
  double loss_total = 0.0;
  double loss_l1 = 0.0;
  double loss_mfd_weighted = 0.0;
};

// Assembles the supervised batch loss on the tape: the mean over rows of
// |f(x) - target| + lambda_mfd * mask * |f(x)|, where batch_mask is the
// precomputed 0/1 manifold gate (near_surface and |target| <= tau_surf).
RefineBatchGraph build_refine_loss(Tape& t, const Network& net, Array batch_x,
                                   Array batch_target, Array batch_mask,
                                   const RefineConfig& config);

struct RefineResult {
  Network net;
  RefineLossLog log;
};

// Supervised fit of a fresh network (role Refined) against the sample set:
// Adam with a cosine learning-rate schedule over `iterations` seeded batches
// drawn with replacement; the per-batch objective is the mean of
// loss_supervised over the batch.  `seed` drives init and batch selection;
// a non-finite loss aborts with diagnostics (NumericError).
RefineResult refine_sdf(const std::vector<RefineSample>& samples,
                        const NetworkArch& arch, const RefineConfig& config,
                        std::uint64_t seed, bool verbose = false);

// Sample-set cache ("RCSS"): magic, u32 version=1, u64 count, then per sample
// 3 little-endian f32 position, f32 target, u8 near_surface flag.
// load(save(s)) is exact for f32-valued samples; malformed files raise
// IoError with the byte offset.
void save_refine_samples(const std::string& path,
                         const std::vector<RefineSample>& samples);
std::vector<RefineSample> load_refine_samples(const std::string& path);

}  // namespace rowcol
