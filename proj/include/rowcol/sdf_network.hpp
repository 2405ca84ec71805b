#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rowcol/array.hpp"
#include "rowcol/field.hpp"
#include "rowcol/tape.hpp"
#include "rowcol/vec3.hpp"

namespace rowcol {

// Coordinate decoder f: R^3 -> R.  ReLU MLP with one skip connection: layer
// `skip_at` (1-based) emits hidden-3 channels, its activation is
// concatenated with the raw input to restore width `hidden`, and the last
// layer emits a single linear channel.
struct NetworkArch {
  std::size_t n_layers = 8;
  std::size_t hidden = 256;
  std::size_t skip_at = 4;  // 1-based layer index; 1 <= skip_at < n_layers
};

// Which stage of the pipeline the decoder belongs to.
enum class NetRole { RowView, ColView, Refined };

const char* net_role_name(NetRole role);              // "row" / "col" / "refined"
NetRole net_role_from_name(const std::string& name);  // ConfigError on unknown

struct Network {
  NetworkArch arch;
  NetRole role = NetRole::RowView;
  std::uint64_t seed = 0;
  std::vector<Array> weights;  // weights[l]: out_l x in_l, l 0-based
  std::vector<Array> biases;   // biases[l]: 1 x out_l
};

// ConfigError unless 1 <= skip_at < n_layers and hidden >= 4 (the skip layer
// must emit at least one channel).
void validate_arch(const NetworkArch& arch);

// Widths of 0-based layer l under `arch` (after validation).
std::size_t layer_in_width(const NetworkArch& arch, std::size_t l);
std::size_t layer_out_width(const NetworkArch& arch, std::size_t l);

// Geometric (sphere-like) initialization: the fresh net approximates
// f(x) = |x| - r0 with r0 = 0.5, giving the self-supervised fit a usable
// sign structure from step one.  The first layer measures quasi-uniform ray
// features relu(d_i . x), interior layers start near the identity, and the
// output layer averages the rays into ~|x| (zero hidden biases make
// f(0) = -r0 exact); tiny per-seed noise breaks symmetry for training, and
// the raw-input columns of the post-skip layer start at zero so the concat
// does not disturb the fresh field.  Deterministic per seed.
Network init_network(const NetworkArch& arch, std::uint64_t seed, NetRole role,
                     double r0 = 0.5);

// Forward pass, no tape.  Batch evaluation chunks rows through the same
// kernels the tape uses, so it is bitwise identical to the training-time
// graph (and to N single evaluations).
double eval_sdf(const Network& net, const Vec3& x);
std::vector<double> eval_sdf_batch(const Network& net,
                                   const std::vector<Vec3>& xs);

// Exact reverse-mode input gradient at one point.
Vec3 spatial_gradient(const Network& net, const Vec3& x);

// Forward pass recorded on a tape.  `x` is an n x 3 value already on `t`
// (leaf or constant); parameters are registered as leaves in layer order so
// the caller can read gradients and apply updates.
struct NetGraph {
  Value f;                     // n x 1 predictions
  std::vector<Value> weights;  // leaf per layer
  std::vector<Value> biases;   // leaf per layer
};
NetGraph build_sdf_graph(Tape& t, const Network& net, Value x);

// Snapshot: text header (format version, role, seed, arch), then a binary
// blob of little-endian f32 — per layer the weight matrix row-major
// (output-major) then the bias vector.  Round-trip is lossless at 32-bit
// precision.  IoError on unreadable/malformed files (blob errors report the
// byte offset).
void save_network(const std::string& path, const Network& net);
Network load_network(const std::string& path);

// SdfField adapter over a trained network (stored by value; networks are
// immutable after training).
class NetworkField final : public SdfField {
 public:
  explicit NetworkField(Network net) : net_(std::move(net)) {}

  double eval(const Vec3& x) const override { return eval_sdf(net_, x); }
  void eval_batch(const std::vector<Vec3>& xs,
                  std::vector<double>& out) const override {
    out = eval_sdf_batch(net_, xs);
  }
  Vec3 gradient(const Vec3& x) const override {
    return spatial_gradient(net_, x);
  }

  const Network& network() const { return net_; }

 private:
  Network net_;
};

}  // namespace rowcol
