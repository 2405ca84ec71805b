#include "rowcol/pipeline.hpp"

#include <cctype>
#include <cerrno>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <memory>
#include <utility>

#include "rowcol/csg.hpp"
#include "rowcol/errors.hpp"
#include "rowcol/hash.hpp"
#include "rowcol/meshing.hpp"
#include "rowcol/pointcloud.hpp"

namespace rowcol {
namespace {

constexpr double kNormMargin = 0.9;
const Aabb kCube{{-1.0, -1.0, -1.0}, {1.0, 1.0, 1.0}};

std::string fmt_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_u64(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%" PRIu64, v);
  return buf;
}

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

struct ConfigLine {
  std::string key, value;
  std::size_t line = 0;
};

[[noreturn]] void bad_value(const ConfigLine& kv) {
  throw ConfigError("config: invalid value '" + kv.value + "' for '" +
                    kv.key + "' at line " + std::to_string(kv.line));
}

double parse_real(const ConfigLine& kv) {
  char* end = nullptr;
  const double v = std::strtod(kv.value.c_str(), &end);
  if (end != kv.value.c_str() + kv.value.size() || kv.value.empty() ||
      !std::isfinite(v)) {
    bad_value(kv);
  }
  return v;
}

std::uint64_t parse_count(const ConfigLine& kv) {
  if (kv.value.empty() ||
      !std::isdigit(static_cast<unsigned char>(kv.value[0]))) {
    bad_value(kv);
  }
  errno = 0;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(kv.value.c_str(), &end, 10);
  if (end != kv.value.c_str() + kv.value.size() || errno == ERANGE) {
    bad_value(kv);
  }
  return v;
}

std::vector<ConfigLine> split_config(const std::string& text) {
  std::vector<ConfigLine> out;
  std::size_t pos = 0, line_no = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string line = text.substr(
        pos, nl == std::string::npos ? std::string::npos : nl - pos);
    pos = nl == std::string::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const std::size_t eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config: expected 'key = value' at line " +
                        std::to_string(line_no));
    }
    ConfigLine kv;
    kv.key = trim(stripped.substr(0, eq));
    kv.value = trim(stripped.substr(eq + 1));
    kv.line = line_no;
    if (kv.key.empty()) {
      throw ConfigError("config: empty key at line " +
                        std::to_string(line_no));
    }
    out.push_back(std::move(kv));
  }
  return out;
}

void apply_key(PipelineConfig& c, const ConfigLine& kv) {
  const std::string& k = kv.key;
  if (k == "preset") {
    // value check only; the caller already seeded the defaults from it
    c.preset = preset_from_name(kv.value);
  } else if (k == "seed") {
    c.seed = parse_count(kv);
  } else if (k == "out") {
    c.out_dir = kv.value;
  } else if (k == "input.row_cloud") {
    c.row_cloud = kv.value;
  } else if (k == "input.col_cloud") {
    c.col_cloud = kv.value;
  } else if (k == "input.gt_mesh") {
    c.gt_mesh = kv.value;
  } else if (k == "input.phantom") {
    c.phantom = parse_phantom_name(kv.value);
  } else if (k == "input.thickness") {
    c.thickness = parse_real(kv);
  } else if (k == "input.slice_spacing") {
    c.slice_spacing = parse_real(kv);
  } else if (k == "input.noise_sigma") {
    c.noise_sigma = parse_real(kv);
  } else if (k == "input.points_per_view") {
    c.points_per_view = parse_count(kv);
  } else if (k == "prep.fps_points") {
    c.fps_points = parse_count(kv);
  } else if (k == "prep.queries_per_point") {
    c.queries_per_point = parse_count(kv);
  } else if (k == "prep.sigma_nn_rank") {
    c.sigma_nn_rank = parse_count(kv);
  } else if (k == "prep.uniform_queries") {
    c.uniform_queries = parse_count(kv);
  } else if (k == "net.layers") {
    c.arch.n_layers = parse_count(kv);
  } else if (k == "net.hidden") {
    c.arch.hidden = parse_count(kv);
  } else if (k == "net.skip_at") {
    c.arch.skip_at = parse_count(kv);
  } else if (k == "selfsup.iterations") {
    c.selfsup.iterations = parse_count(kv);
  } else if (k == "selfsup.batch") {
    c.selfsup.batch = parse_count(kv);
  } else if (k == "selfsup.base_lr") {
    c.selfsup.base_lr = parse_real(kv);
  } else if (k == "selfsup.lambda_scc") {
    c.selfsup.lambda_scc = parse_real(kv);
  } else if (k == "selfsup.alpha_nonmfd") {
    c.selfsup.alpha_nonmfd = parse_real(kv);
  } else if (k == "selfsup.lambda_adl") {
    c.selfsup.lambda_adl = parse_real(kv);
  } else if (k == "selfsup.eps_pair") {
    c.selfsup.eps_pair = parse_real(kv);
  } else if (k == "refine.n_uniform") {
    c.refine.n_uniform = parse_count(kv);
  } else if (k == "refine.n_surface") {
    c.refine.n_surface = parse_count(kv);
  } else if (k == "refine.sigma_refine") {
    c.refine.sigma_refine = parse_real(kv);
  } else if (k == "refine.tau_surf") {
    c.refine.tau_surf = parse_real(kv);
  } else if (k == "refine.lambda_mfd") {
    c.refine.lambda_mfd = parse_real(kv);
  } else if (k == "refine.iterations") {
    c.refine.iterations = parse_count(kv);
  } else if (k == "refine.batch") {
    c.refine.batch = parse_count(kv);
  } else if (k == "refine.base_lr") {
    c.refine.base_lr = parse_real(kv);
  } else if (k == "mesh.resolution") {
    c.mesh_resolution = parse_count(kv);
  } else if (k == "metrics.samples") {
    c.metric_samples = parse_count(kv);
  } else {
    throw ConfigError("config: unknown key '" + k + "' at line " +
                      std::to_string(kv.line));
  }
}

void ensure_out_dir(const PipelineConfig& config) {
  std::error_code ec;
  std::filesystem::create_directories(config.out_dir, ec);
  if (ec) {
    throw IoError("cannot create output directory '" + config.out_dir +
                  "': " + ec.message());
  }
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("write failed for '" + path + "'");
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

bool is_grid_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  char magic[4] = {};
  in.read(magic, 4);
  return in.gcount() == 4 && std::string(magic, 4) == "RCSD";
}

std::string view_name(NetRole role) {
  if (role == NetRole::Refined) {
    throw ConfigError("fit: view role must be row or col");
  }
  return net_role_name(role);
}

// Conventional input locations: phantom runs read their own synth outputs.
std::string cloud_path(const PipelineConfig& config, NetRole role) {
  if (config.row_cloud.empty()) {
    return artifact_path(config, view_name(role) + ".xyz");
  }
  return role == NetRole::RowView ? config.row_cloud : config.col_cloud;
}

std::string gt_path(const PipelineConfig& config) {
  if (config.row_cloud.empty()) return artifact_path(config, "gt_mesh.obj");
  return config.gt_mesh;
}

FieldPtr load_fused_field(const PipelineConfig& config) {
  auto row = std::make_shared<NetworkField>(
      load_network(artifact_path(config, "net_row.rcnn")));
  auto col = std::make_shared<NetworkField>(
      load_network(artifact_path(config, "net_col.rcnn")));
  return csg_intersect(std::move(row), std::move(col));
}

void check_which(const std::string& which) {
  if (which != "row" && which != "col" && which != "csg" &&
      which != "refined") {
    throw ConfigError("unknown mesh selector '" + which +
                      "' (want row, col, csg, or refined)");
  }
}

template <typename Fn>
void run_stage(const std::string& name, bool verbose, Fn&& fn) {
  if (verbose) std::fprintf(stderr, "[rowcol] stage %s\n", name.c_str());
  try {
    fn();
  } catch (const ConfigError& e) {
    throw ConfigError("stage " + name + ": " + e.what());
  } catch (const IoError& e) {
    throw IoError("stage " + name + ": " + e.what());
  } catch (const NumericError& e) {
    throw NumericError("stage " + name + ": " + e.what());
  }
}

std::uint64_t hash_file(const std::string& path) {
  const std::string bytes = read_text(path);
  return fnv1a64(bytes.data(), bytes.size());
}

}  // namespace

Preset preset_from_name(const std::string& name) {
  if (name == "paper") return Preset::Paper;
  if (name == "desk") return Preset::Desk;
  throw ConfigError("unknown preset '" + name + "' (want paper or desk)");
}

const char* preset_name(Preset preset) {
  return preset == Preset::Paper ? "paper" : "desk";
}

PipelineConfig default_pipeline_config(Preset preset) {
  PipelineConfig c;  // the defaults are the Desk preset
  if (preset == Preset::Paper) {
    c.preset = Preset::Paper;
    c.arch = NetworkArch{8, 256, 4};
    c.selfsup.iterations = 10000;
    c.refine.iterations = 10000;
    c.mesh_resolution = 256;
  }
  return c;
}

PipelineConfig parse_pipeline_config(
    const std::string& text, const std::optional<Preset>& preset_override) {
  const std::vector<ConfigLine> lines = split_config(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    for (std::size_t j = i + 1; j < lines.size(); ++j) {
      if (lines[i].key == lines[j].key) {
        throw ConfigError("config: duplicate key '" + lines[j].key +
                          "' at line " + std::to_string(lines[j].line));
      }
    }
  }
  // the preset decides the defaults, so resolve it before anything else
  Preset preset = Preset::Desk;
  for (const ConfigLine& kv : lines) {
    if (kv.key == "preset") preset = preset_from_name(kv.value);
  }
  if (preset_override) preset = *preset_override;
  PipelineConfig c = default_pipeline_config(preset);
  for (const ConfigLine& kv : lines) apply_key(c, kv);
  c.preset = preset;  // an override outranks the config key
  return c;
}

std::string format_pipeline_config(const PipelineConfig& c) {
  std::string out;
  auto put = [&out](const std::string& key, const std::string& value) {
    out += key;
    out += " = ";
    out += value;
    out += "\n";
  };
  put("preset", preset_name(c.preset));
  put("seed", fmt_u64(c.seed));
  put("out", c.out_dir);
  put("input.row_cloud", c.row_cloud);
  put("input.col_cloud", c.col_cloud);
  put("input.gt_mesh", c.gt_mesh);
  put("input.phantom", phantom_name_string(c.phantom));
  put("input.thickness", fmt_real(c.thickness));
  put("input.slice_spacing", fmt_real(c.slice_spacing));
  put("input.noise_sigma", fmt_real(c.noise_sigma));
  put("input.points_per_view", fmt_u64(c.points_per_view));
  put("prep.fps_points", fmt_u64(c.fps_points));
  put("prep.queries_per_point", fmt_u64(c.queries_per_point));
  put("prep.sigma_nn_rank", fmt_u64(c.sigma_nn_rank));
  put("prep.uniform_queries", fmt_u64(c.uniform_queries));
  put("net.layers", fmt_u64(c.arch.n_layers));
  put("net.hidden", fmt_u64(c.arch.hidden));
  put("net.skip_at", fmt_u64(c.arch.skip_at));
  put("selfsup.iterations", fmt_u64(c.selfsup.iterations));
  put("selfsup.batch", fmt_u64(c.selfsup.batch));
  put("selfsup.base_lr", fmt_real(c.selfsup.base_lr));
  put("selfsup.lambda_scc", fmt_real(c.selfsup.lambda_scc));
  put("selfsup.alpha_nonmfd", fmt_real(c.selfsup.alpha_nonmfd));
  put("selfsup.lambda_adl", fmt_real(c.selfsup.lambda_adl));
  put("selfsup.eps_pair", fmt_real(c.selfsup.eps_pair));
  put("refine.n_uniform", fmt_u64(c.refine.n_uniform));
  put("refine.n_surface", fmt_u64(c.refine.n_surface));
  put("refine.sigma_refine", fmt_real(c.refine.sigma_refine));
  put("refine.tau_surf", fmt_real(c.refine.tau_surf));
  put("refine.lambda_mfd", fmt_real(c.refine.lambda_mfd));
  put("refine.iterations", fmt_u64(c.refine.iterations));
  put("refine.batch", fmt_u64(c.refine.batch));
  put("refine.base_lr", fmt_real(c.refine.base_lr));
  put("mesh.resolution", fmt_u64(c.mesh_resolution));
  put("metrics.samples", fmt_u64(c.metric_samples));
  return out;
}

void validate_pipeline_config(const PipelineConfig& c) {
  validate_arch(c.arch);
  validate_selfsup_config(c.selfsup);
  validate_refine_config(c.refine);
  if (c.out_dir.empty()) throw ConfigError("config: out directory is empty");
  if (c.mesh_resolution < 2) {
    throw ConfigError("config: mesh.resolution must be at least 2");
  }
  if (c.metric_samples == 0) {
    throw ConfigError("config: metrics.samples must be positive");
  }
  if (c.fps_points == 0) {
    throw ConfigError("config: prep.fps_points must be positive");
  }
  if (c.queries_per_point == 0) {
    throw ConfigError("config: prep.queries_per_point must be positive");
  }
  if (c.sigma_nn_rank == 0) {
    throw ConfigError("config: prep.sigma_nn_rank must be positive");
  }
  if (c.row_cloud.empty() != c.col_cloud.empty()) {
    throw ConfigError(
        "config: input.row_cloud and input.col_cloud must be given together");
  }
  if (c.row_cloud.empty()) {
    ScanSpec scan;  // phantom mode: catch bad scan parameters up front
    scan.thickness = c.thickness;
    scan.slice_spacing = c.slice_spacing;
    scan.noise_sigma = c.noise_sigma;
    scan.n_points = c.points_per_view;
    validate_scan_spec(scan);
  }
}

void save_transform(const std::string& path, const NormTransform& t) {
  std::string text = "center " + fmt_real(t.center.x) + " " +
                     fmt_real(t.center.y) + " " + fmt_real(t.center.z) +
                     "\nscale " + fmt_real(t.scale) + "\n";
  write_text(path, text);
}

NormTransform load_transform(const std::string& path) {
  const std::string text = read_text(path);
  NormTransform t;
  char extra;
  if (std::sscanf(text.c_str(), "center %lf %lf %lf scale %lf %c",
                  &t.center.x, &t.center.y, &t.center.z, &t.scale,
                  &extra) != 4) {
    throw IoError("'" + path + "': malformed transform file");
  }
  if (!std::isfinite(t.center.x) || !std::isfinite(t.center.y) ||
      !std::isfinite(t.center.z) || !std::isfinite(t.scale) ||
      t.scale <= 0.0) {
    throw IoError("'" + path +
                  "': transform needs finite center and positive scale");
  }
  return t;
}

std::string artifact_path(const PipelineConfig& config,
                          const std::string& name) {
  return config.out_dir + "/" + name;
}

std::uint64_t pipeline_stage_seed(const PipelineConfig& config,
                                  const std::string& stage) {
  return stage_seed(config.seed, stage);
}

void stage_synth(const PipelineConfig& config) {
  ensure_out_dir(config);
  const Phantom phantom = make_phantom(config.phantom);
  save_shape(artifact_path(config, "shape.txt"), phantom.spec);
  save_mesh_obj(artifact_path(config, "gt_mesh.obj"), phantom.gt_mesh);

  ScanSpec scan;
  scan.thickness = config.thickness;
  scan.slice_spacing = config.slice_spacing;
  scan.noise_sigma = config.noise_sigma;
  scan.n_points = config.points_per_view;

  scan.direction = {1.0, 0.0, 0.0};
  scan.seed = pipeline_stage_seed(config, "scan-row");
  write_point_cloud(artifact_path(config, "row.xyz"),
                    simulate_scan(phantom.spec, scan, ViewTag::Row));

  scan.direction = {0.0, 1.0, 0.0};
  scan.seed = pipeline_stage_seed(config, "scan-col");
  write_point_cloud(artifact_path(config, "col.xyz"),
                    simulate_scan(phantom.spec, scan, ViewTag::Column));
}

void stage_fit(const PipelineConfig& config, NetRole role) {
  const std::string view = view_name(role);
  ensure_out_dir(config);

  PointCloud row = read_point_cloud(cloud_path(config, NetRole::RowView));
  PointCloud col = read_point_cloud(cloud_path(config, NetRole::ColView));
  const auto reduce = [&config](PointCloud& cloud, const char* stage) {
    if (cloud.points.size() <= config.fps_points) return;
    const std::vector<std::size_t> keep = farthest_point_sampling(
        cloud, config.fps_points, pipeline_stage_seed(config, stage));
    std::vector<Vec3> thinned;
    thinned.reserve(keep.size());
    for (const std::size_t i : keep) thinned.push_back(cloud.points[i]);
    cloud.points = std::move(thinned);
  };
  reduce(row, "fps-row");
  reduce(col, "fps-col");

  // one shared frame for both views — fusing fields fit in different
  // frames would compare apples to oranges
  Aabb box;
  for (const Vec3& p : row.points) box.expand(p);
  for (const Vec3& p : col.points) box.expand(p);
  const NormTransform transform = norm_transform_for_box(box, kNormMargin);
  save_transform(artifact_path(config, "transform.txt"), transform);

  const bool is_row = role == NetRole::RowView;
  const PointCloud normed =
      apply_norm(is_row ? row.points : col.points, transform,
                 is_row ? ViewTag::Row : ViewTag::Column);
  const QuerySet queries = sample_training_queries(
      normed, config.queries_per_point, config.sigma_nn_rank,
      config.uniform_queries, pipeline_stage_seed(config, "queries-" + view));

  const TrainResult result =
      train_view(queries, config.arch, role, config.selfsup,
                 pipeline_stage_seed(config, "fit-" + view), config.verbose);
  save_network(artifact_path(config, "net_" + view + ".rcnn"), result.net);
  write_loss_log(artifact_path(config, "loss_" + view + ".csv"), result.log);
}

void stage_fuse(const PipelineConfig& config) {
  ensure_out_dir(config);
  const FieldPtr fused = load_fused_field(config);
  const std::size_t r = config.mesh_resolution;
  save_grid(artifact_path(config, "fused_grid.rcsd"),
            sample_grid(*fused, {r, r, r}, kCube));
}

void stage_refine(const PipelineConfig& config) {
  ensure_out_dir(config);
  const FieldPtr fused = load_fused_field(config);
  RefineConfig rc = config.refine;
  rc.seed = pipeline_stage_seed(config, "refine-samples");
  const std::vector<RefineSample> samples = sample_refinement_set(*fused, rc);
  const RefineResult result =
      refine_sdf(samples, config.arch, rc,
                 pipeline_stage_seed(config, "refine-fit"), config.verbose);
  save_network(artifact_path(config, "net_refined.rcnn"), result.net);
  write_refine_loss_log(artifact_path(config, "refine_log.csv"), result.log);
}

void stage_mesh_one(const PipelineConfig& config, const std::string& which) {
  check_which(which);
  ensure_out_dir(config);
  const NormTransform transform =
      load_transform(artifact_path(config, "transform.txt"));

  Mesh mesh;
  if (which == "csg") {
    mesh = marching_cubes(load_grid(artifact_path(config, "fused_grid.rcsd")));
  } else {
    const NetworkField field(
        load_network(artifact_path(config, "net_" + which + ".rcnn")));
    mesh = marching_cubes(
        evaluate_grid(field, config.mesh_resolution, kCube));
  }
  for (Vec3& v : mesh.vertices) v = transform.invert(v);
  save_mesh_obj(artifact_path(config, "mesh_" + which + ".obj"), mesh);
}

void stage_eval_one(const PipelineConfig& config, const std::string& which) {
  check_which(which);
  ensure_out_dir(config);
  const std::string gt = gt_path(config);
  if (gt.empty()) {
    throw ConfigError("eval: no ground-truth mesh configured");
  }
  eval_files(artifact_path(config, "mesh_" + which + ".obj"), gt,
             config.metric_samples,
             pipeline_stage_seed(config, "metrics-" + which), "input",
             artifact_path(config, "metrics_" + which + ".txt"));
}

void fuse_files(const std::string& a_path, const std::string& b_path,
                std::size_t res, const std::string& out_path) {
  const bool a_grid = is_grid_file(a_path);
  const bool b_grid = is_grid_file(b_path);
  if (a_grid != b_grid) {
    throw ConfigError(
        "fuse: inputs must be two grids or two networks, not a mix");
  }
  if (a_grid) {
    save_grid(out_path, grid_max(load_grid(a_path), load_grid(b_path)));
    return;
  }
  if (res < 2) {
    throw ConfigError("fuse: network inputs need a resolution of at least 2");
  }
  const FieldPtr fused =
      csg_intersect(std::make_shared<NetworkField>(load_network(a_path)),
                    std::make_shared<NetworkField>(load_network(b_path)));
  save_grid(out_path, sample_grid(*fused, {res, res, res}, kCube));
}

void mesh_file(const std::string& field_path, std::size_t res,
               const std::string& transform_path,
               const std::string& out_obj) {
  Mesh mesh;
  if (is_grid_file(field_path)) {
    mesh = marching_cubes(load_grid(field_path));
  } else {
    if (res < 2) {
      throw ConfigError("mesh: network input needs a resolution of at least 2");
    }
    const NetworkField field(load_network(field_path));
    mesh = marching_cubes(evaluate_grid(field, res, kCube));
  }
  if (!transform_path.empty()) {
    const NormTransform transform = load_transform(transform_path);
    for (Vec3& v : mesh.vertices) v = transform.invert(v);
  }
  save_mesh_obj(out_obj, mesh);
}

void eval_files(const std::string& recon_path, const std::string& gt_path,
                std::size_t n_samples, std::uint64_t seed,
                const std::string& space, const std::string& out_report) {
  std::vector<Vec3> recon_pts;
  if (recon_path.ends_with(".obj")) {
    recon_pts =
        sample_mesh_surface(load_mesh_obj(recon_path), n_samples, seed);
  } else {
    recon_pts = read_point_cloud(recon_path).points;
  }
  const std::vector<Vec3> gt_pts =
      sample_mesh_surface(load_mesh_obj(gt_path), n_samples, seed);
  MetricReport report = compute_metrics(recon_pts, gt_pts, seed, space);
  write_metric_report(out_report, report);
}

std::string format_manifest(const Manifest& manifest) {
  std::string out = "rowcol manifest v1\n";
  out += "preset ";
  out += preset_name(manifest.preset);
  out += "\nseed " + fmt_u64(manifest.seed) + "\n";
  for (const ManifestEntry& e : manifest.entries) {
    char hash[20];
    std::snprintf(hash, sizeof hash, "%016" PRIx64, e.hash);
    out += "artifact " + e.kind + " " + e.name + " " + hash + "\n";
  }
  return out;
}

Manifest run_pipeline(const PipelineConfig& config) {
  validate_pipeline_config(config);
  ensure_out_dir(config);
  write_text(artifact_path(config, "config.resolved.txt"),
             format_pipeline_config(config));

  const bool phantom_mode = config.row_cloud.empty();
  const bool has_gt = phantom_mode || !config.gt_mesh.empty();
  const bool v = config.verbose;

  if (phantom_mode) {
    run_stage("synth", v, [&] { stage_synth(config); });
  }
  run_stage("fit-row", v, [&] { stage_fit(config, NetRole::RowView); });
  run_stage("fit-col", v, [&] { stage_fit(config, NetRole::ColView); });
  run_stage("fuse", v, [&] { stage_fuse(config); });
  run_stage("refine", v, [&] { stage_refine(config); });
  for (const char* which : {"row", "col", "csg", "refined"}) {
    run_stage(std::string("mesh-") + which, v,
              [&] { stage_mesh_one(config, which); });
  }
  if (has_gt) {
    for (const char* which : {"row", "col", "csg", "refined"}) {
      run_stage(std::string("eval-") + which, v,
                [&] { stage_eval_one(config, which); });
    }
  }

  Manifest manifest;
  manifest.preset = config.preset;
  manifest.seed = config.seed;
  const auto add = [&](const std::string& kind, const std::string& name,
                       const std::string& path) {
    manifest.entries.push_back(ManifestEntry{kind, name, hash_file(path)});
  };
  const auto add_local = [&](const std::string& kind,
                             const std::string& name) {
    add(kind, name, artifact_path(config, name));
  };
  run_stage("manifest", v, [&] {
    add_local("config", "config.resolved.txt");
    if (phantom_mode) {
      add_local("shape", "shape.txt");
      add_local("cloud", "row.xyz");
      add_local("cloud", "col.xyz");
      add_local("gt-mesh", "gt_mesh.obj");
    } else {
      add("cloud", config.row_cloud, config.row_cloud);
      add("cloud", config.col_cloud, config.col_cloud);
      if (has_gt) add("gt-mesh", config.gt_mesh, config.gt_mesh);
    }
    add_local("transform", "transform.txt");
    add_local("network", "net_row.rcnn");
    add_local("network", "net_col.rcnn");
    add_local("loss-log", "loss_row.csv");
    add_local("loss-log", "loss_col.csv");
    add_local("grid", "fused_grid.rcsd");
    add_local("network", "net_refined.rcnn");
    add_local("refine-log", "refine_log.csv");
    for (const char* which : {"row", "col", "csg", "refined"}) {
      add_local("mesh", std::string("mesh_") + which + ".obj");
    }
    if (has_gt) {
      for (const char* which : {"row", "col", "csg", "refined"}) {
        add_local("metric-report", std::string("metrics_") + which + ".txt");
      }
    }
    write_text(artifact_path(config, "manifest.txt"),
               format_manifest(manifest));
  });
  return manifest;
}

}  // namespace rowcol
