// rowcol — coarse-to-fine surface reconstruction from two distorted scans.
//
// One binary, one stage per subcommand (plus `run` for the whole pipeline).
// Stages communicate through files only, so any stage can be re-run — or
// replaced by another tool — as long as the formats match.

#include <cstdio>
#include <exception>
#include <fstream>
#include <iterator>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "rowcol/errors.hpp"
#include "rowcol/pipeline.hpp"

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw rowcol::IoError("cannot open config '" + path + "'");
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "rowcol: fit one neural SDF per scan view, fuse them by CSG "
      "intersection, refine the fused field, and extract/score a mesh"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may appear after the subcommand name

  std::string config_path, preset_arg, out_arg;
  std::uint64_t seed_arg = 0;
  bool verbose = false;
  app.add_option("--config", config_path, "config file (key = value lines)");
  auto* seed_opt =
      app.add_option("--seed", seed_arg, "override the global seed");
  auto* preset_opt = app.add_option("--preset", preset_arg,
                                    "scale preset: paper or desk");
  auto* out_opt = app.add_option("--out", out_arg, "output directory");
  app.add_flag("-v,--verbose", verbose, "progress on stderr");

  auto* run = app.add_subcommand("run", "full pipeline: synth (phantom "
                                        "inputs), fit both views, fuse, "
                                        "refine, mesh, evaluate, manifest");
  auto* synth = app.add_subcommand(
      "synth", "write the phantom's shape spec, ground-truth mesh, and the "
               "two simulated scans");
  auto* fit = app.add_subcommand(
      "fit", "fit one view's network from its point cloud");
  std::string fit_view;
  fit->add_option("--view", fit_view, "which scan to fit: row or col")
      ->required();

  auto* fuse = app.add_subcommand(
      "fuse", "pointwise max of the two fields (conventional artifacts, or "
              "explicit files via --a/--b)");
  std::string fuse_a, fuse_b, fuse_out;
  std::size_t fuse_res = 0;
  fuse->add_option("--a", fuse_a, "first grid (.rcsd) or network (.rcnn)");
  fuse->add_option("--b", fuse_b, "second grid or network");
  fuse->add_option("--out-grid", fuse_out, "output grid path");
  fuse->add_option("--res", fuse_res,
                   "sampling resolution for network inputs");

  auto* refine = app.add_subcommand(
      "refine", "supervised re-fit against the fused field");

  auto* mesh = app.add_subcommand(
      "mesh", "marching-cubes extraction (conventional artifacts via "
              "--which, or an explicit field via --field)");
  std::string mesh_which, mesh_field, mesh_transform, mesh_out;
  std::size_t mesh_res = 0;
  mesh->add_option("--which", mesh_which,
                   "conventional field: row, col, csg, or refined");
  mesh->add_option("--field", mesh_field, "grid or network snapshot");
  mesh->add_option("--transform", mesh_transform,
                   "transform file mapping vertices back to input units");
  mesh->add_option("--out-mesh", mesh_out, "output OBJ path");
  mesh->add_option("--res", mesh_res,
                   "sampling resolution for network inputs");

  auto* eval = app.add_subcommand(
      "eval", "CD/HD/MAD/RMSE report (conventional artifacts via --which, "
              "or explicit files via --recon/--gt)");
  std::string eval_which, eval_recon, eval_gt, eval_out, eval_space = "input";
  std::size_t eval_samples = 0;
  eval->add_option("--which", eval_which,
                   "conventional mesh: row, col, csg, or refined");
  eval->add_option("--recon", eval_recon,
                   "reconstruction: .obj mesh (sampled) or x y z cloud");
  eval->add_option("--gt", eval_gt, "ground-truth mesh (.obj)");
  eval->add_option("--out-report", eval_out, "output report path");
  eval->add_option("--samples", eval_samples, "surface samples per side");
  eval->add_option("--space", eval_space, "units label for the report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // help exits clean; anything else is a bad invocation -> config error
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    std::optional<rowcol::Preset> preset_override;
    if (*preset_opt) {
      preset_override = rowcol::preset_from_name(preset_arg);
    }
    rowcol::PipelineConfig config =
        config_path.empty()
            ? rowcol::default_pipeline_config(
                  preset_override.value_or(rowcol::Preset::Desk))
            : rowcol::parse_pipeline_config(slurp(config_path),
                                            preset_override);
    if (*seed_opt) config.seed = seed_arg;
    if (*out_opt) config.out_dir = out_arg;
    config.verbose = verbose;

    if (*run) {
      rowcol::run_pipeline(config);
    } else if (*synth) {
      rowcol::validate_pipeline_config(config);
      rowcol::stage_synth(config);
    } else if (*fit) {
      rowcol::validate_pipeline_config(config);
      if (fit_view != "row" && fit_view != "col") {
        throw rowcol::ConfigError("fit: --view must be row or col, not '" +
                                  fit_view + "'");
      }
      rowcol::stage_fit(config, fit_view == "row" ? rowcol::NetRole::RowView
                                                  : rowcol::NetRole::ColView);
    } else if (*fuse) {
      if (fuse_a.empty() && fuse_b.empty() && fuse_out.empty()) {
        rowcol::validate_pipeline_config(config);
        rowcol::stage_fuse(config);
      } else if (!fuse_a.empty() && !fuse_b.empty() && !fuse_out.empty()) {
        rowcol::fuse_files(fuse_a, fuse_b,
                           fuse_res ? fuse_res : config.mesh_resolution,
                           fuse_out);
      } else {
        throw rowcol::ConfigError(
            "fuse: --a, --b, and --out-grid go together");
      }
    } else if (*refine) {
      rowcol::validate_pipeline_config(config);
      rowcol::stage_refine(config);
    } else if (*mesh) {
      if (mesh_field.empty()) {
        if (mesh_which.empty()) {
          throw rowcol::ConfigError("mesh: need --which or --field");
        }
        rowcol::validate_pipeline_config(config);
        rowcol::stage_mesh_one(config, mesh_which);
      } else {
        if (mesh_out.empty()) {
          throw rowcol::ConfigError("mesh: --field needs --out-mesh");
        }
        rowcol::mesh_file(mesh_field,
                          mesh_res ? mesh_res : config.mesh_resolution,
                          mesh_transform, mesh_out);
      }
    } else if (*eval) {
      if (eval_recon.empty()) {
        if (eval_which.empty()) {
          throw rowcol::ConfigError("eval: need --which or --recon");
        }
        rowcol::validate_pipeline_config(config);
        rowcol::stage_eval_one(config, eval_which);
      } else {
        if (eval_gt.empty() || eval_out.empty()) {
          throw rowcol::ConfigError(
              "eval: --recon needs --gt and --out-report");
        }
        rowcol::eval_files(
            eval_recon, eval_gt,
            eval_samples ? eval_samples : config.metric_samples,
            rowcol::pipeline_stage_seed(config, "eval"), eval_space,
            eval_out);
      }
    }
  } catch (const rowcol::ConfigError& e) {
    std::fprintf(stderr, "rowcol: %s\n", e.what());
    return 2;
  } catch (const rowcol::IoError& e) {
    std::fprintf(stderr, "rowcol: %s\n", e.what());
    return 3;
  } catch (const rowcol::NumericError& e) {
    std::fprintf(stderr, "rowcol: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "rowcol: unexpected error: %s\n", e.what());
    return 1;
  }
  return 0;
}
