#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rowcol/phantom.hpp"
#include "rowcol/refine.hpp"
#include "rowcol/sdf_network.hpp"
#include "rowcol/selfsup.hpp"

namespace rowcol {

// Two working scales: Paper is the full-size recipe (8x256 decoder, 1e4
// iterations, 256^3 extraction), Desk shrinks it to something a laptop
// finishes in minutes (4x64, 2e3 iterations, 64^3).
enum class Preset { Paper, Desk };

Preset preset_from_name(const std::string& name);  // "paper" / "desk"
const char* preset_name(Preset preset);

// Everything one end-to-end run needs.  Every field has a default; the
// default-constructed config is the Desk preset on the VertebraToy phantom.
// The preset seeds {net.*, selfsup.iterations, refine.iterations,
// mesh.resolution}; explicit config keys override it field by field.
struct PipelineConfig {
  // Input is either a pair of scan files (both paths set) or a synthetic
  // phantom (paths empty).  gt_mesh enables evaluation for file inputs;
  // phantom runs always know their ground truth.
  std::string row_cloud;
  std::string col_cloud;
  std::string gt_mesh;
  PhantomName phantom = PhantomName::VertebraToy;
  double thickness = 0.2;
  double slice_spacing = 0.05;
  double noise_sigma = 0.0;
  std::size_t points_per_view = 10000;

  Preset preset = Preset::Desk;
  std::uint64_t seed = 0;
  std::string out_dir = "rowcol-out";
  bool verbose = false;  // CLI -v; not a config-file key

  // data preparation: FPS target, then per-point Gaussian queries with the
  // nn_rank-th neighbor distance as bandwidth, plus uniform cube queries
  std::size_t fps_points = 20000;
  std::size_t queries_per_point = 20;
  std::size_t sigma_nn_rank = 50;
  std::size_t uniform_queries = 20000;

  NetworkArch arch{4, 64, 2};
  SelfSupConfig selfsup{.iterations = 2000};
  RefineConfig refine{.iterations = 2000};
  std::size_t mesh_resolution = 64;
  std::size_t metric_samples = 30000;
};

PipelineConfig default_pipeline_config(Preset preset);

// Structured text config: one `key = value` per line, dotted keys for
// nesting, full-line # comments.  Unknown and duplicate keys are errors
// (with line numbers), so a typo cannot silently fall back to a default.
// The preset is resolved first (override argument beats the config key
// beats Desk), then explicit keys are applied on top.  Stage seeds are
// always derived from the one global seed, so selfsup/refine carry no seed
// keys of their own.
PipelineConfig parse_pipeline_config(
    const std::string& text,
    const std::optional<Preset>& preset_override = std::nullopt);
std::string format_pipeline_config(const PipelineConfig& config);
void validate_pipeline_config(const PipelineConfig& config);

// Normalization snapshot shared by every stage that crosses between input
// coordinates and the training cube.
void save_transform(const std::string& path, const NormTransform& transform);
NormTransform load_transform(const std::string& path);

// Conventional artifact name inside config.out_dir.
std::string artifact_path(const PipelineConfig& config,
                          const std::string& name);

// Derived per-stage seed: stable hash of (global seed, stage name).
std::uint64_t pipeline_stage_seed(const PipelineConfig& config,
                                  const std::string& stage);

// --- stages ------------------------------------------------------------
// Files are the only interface between stages: each reads the conventional
// artifacts of its predecessors from out_dir and writes its own, so running
// them one by one is byte-identical to run_pipeline.

// Phantom inputs: shape.txt, gt_mesh.obj, and the two distorted scans
// row.xyz / col.xyz (row sweeps x, column sweeps y).
void stage_synth(const PipelineConfig& config);

// Per-view fit (role RowView or ColView): FPS both clouds, normalize them
// jointly into [-0.9, 0.9]^3 (writes transform.txt), build the query set for
// this view, train, and write net_<view>.rcnn + loss_<view>.csv.
void stage_fit(const PipelineConfig& config, NetRole role);

// Audit snapshot of the fused field: pointwise max of the two view networks
// sampled at mesh_resolution^3 over the cube, written as fused_grid.rcsd.
void stage_fuse(const PipelineConfig& config);

// Supervised refinement against the exact composed field (not the grid):
// net_refined.rcnn + refine_log.csv.
void stage_refine(const PipelineConfig& config);

// Mesh extraction for one of "row" / "col" / "csg" / "refined"; vertices are
// mapped back to input coordinates through transform.txt.  "csg" meshes the
// stored fused grid; the others evaluate their network at mesh_resolution.
void stage_mesh_one(const PipelineConfig& config, const std::string& which);

// Metric report mesh_<which>.obj vs the ground-truth mesh -> metrics_<which>.txt.
// Reconstruction and ground truth are sampled with the same derived seed, so
// evaluating a mesh against itself reports exact zeros.
void stage_eval_one(const PipelineConfig& config, const std::string& which);

// --- interop entry points (explicit paths, documented formats only) -----

// Pointwise maximum of two grids (RCSD in, RCSD out), or of two network
// fields sampled at `res` when both inputs are network snapshots.  Inputs
// are told apart by their leading magic bytes.
void fuse_files(const std::string& a_path, const std::string& b_path,
                std::size_t res, const std::string& out_path);

// Marching cubes over a grid file or a network snapshot (again told apart
// by magic); optional transform file maps vertices to input coordinates.
void mesh_file(const std::string& field_path, std::size_t res,
               const std::string& transform_path, const std::string& out_obj);

// Metric report between a reconstruction (.obj mesh, sampled; anything else
// is read as an x y z point cloud and used as-is) and a ground-truth mesh.
void eval_files(const std::string& recon_path, const std::string& gt_path,
                std::size_t n_samples, std::uint64_t seed,
                const std::string& space, const std::string& out_report);

// --- orchestration -------------------------------------------------------

struct ManifestEntry {
  std::string kind;  // config / shape / cloud / gt-mesh / transform /
                     // network / loss-log / grid / refine-log / mesh /
                     // metric-report
  std::string name;  // path relative to out_dir (inputs may be absolute)
  std::uint64_t hash = 0;  // FNV-1a 64 over the file bytes
};

struct Manifest {
  Preset preset = Preset::Desk;
  std::uint64_t seed = 0;
  std::vector<ManifestEntry> entries;
};

std::string format_manifest(const Manifest& manifest);

// The whole coarse-to-fine run: resolved config first, then synth (phantom
// inputs), the two view fits, fusion, refinement, the four meshes
// {row, col, csg, refined}, evaluation when ground truth exists, and
// finally manifest.txt.  A stage failure rethrows with the stage name
// prefixed, leaving every earlier artifact in place.
Manifest run_pipeline(const PipelineConfig& config);

}  // namespace rowcol
