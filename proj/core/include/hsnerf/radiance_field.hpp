#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hsnerf/camera.hpp"
#include "hsnerf/common.hpp"

namespace hsnerf {

enum class Activation { ReLU, Softplus };

// Architecture of the multi-channel field. The density branch sees position
// only; the radiance branch sees the last trunk features plus the encoded
// viewing direction. All counts are exposed because nothing in the method
// pins them.
struct FieldConfig {
  int n_channels = 8;
  int pos_frequencies = 6;
  int dir_frequencies = 4;
  int trunk_layers = 4;
  int trunk_width = 64;
  int radiance_layers = 2;
  int radiance_width = 64;
  bool predict_normals = false;
  Activation activation = Activation::ReLU;
  // Positions are mapped from this box to [-1,1]^3 before encoding.
  Aabb bounds;

  void validate() const;
  int pos_encoding_size() const { return 3 + 6 * pos_frequencies; }
  int dir_encoding_size() const { return 3 + 6 * dir_frequencies; }
  bool operator==(const FieldConfig& o) const;
};

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

// JSON text round-trip of the configuration (used by checkpoints and run
// manifests).
std::string field_config_to_json(const FieldConfig& cfg);
FieldConfig field_config_from_json(const std::string& text);

// Frequency encoding [x, sin(2^k pi x), cos(2^k pi x)]_{k<F}: rows 0..2 are
// x, then for each k three sine rows followed by three cosine rows.
std::vector<double> encode(const Vec3& x, int frequencies);

// Named slice of the flat parameter vector. Weights are column-major
// (rows = fan_out, cols = fan_in).
struct ParamBlock {
  std::string name;
  std::size_t offset = 0;
  int rows = 0;
  int cols = 0;
  std::size_t size() const { return static_cast<std::size_t>(rows) * cols; }
};

class ParamLayout {
 public:
  explicit ParamLayout(const FieldConfig& cfg);

  const std::vector<ParamBlock>& blocks() const { return blocks_; }
  const ParamBlock& block(const std::string& name) const;
  std::size_t total() const { return total_; }

  // Indices into blocks() grouped by role.
  std::vector<int> trunk_weights, trunk_biases;
  int density_weight = -1, density_bias = -1;
  std::vector<int> radiance_weights, radiance_biases;  // hidden layers then output
  int normal_weight = -1, normal_bias = -1;

 private:
  int add(const std::string& name, int rows, int cols);
  std::vector<ParamBlock> blocks_;
  std::size_t total_ = 0;
};

template <typename T>
struct FieldParamsT {
  FieldConfig config;
  std::vector<T> theta;
  std::uint64_t seed = 0;

  template <typename U>
  FieldParamsT<U> cast() const {
    FieldParamsT<U> out;
    out.config = config;
    out.seed = seed;
    out.theta.assign(theta.begin(), theta.end());
    return out;
  }
};
using FieldParams = FieldParamsT<float>;

// Uniform He-style initialisation scaled by fan-in; biases start at zero.
template <typename T>
FieldParamsT<T> init_params(const FieldConfig& cfg, std::uint64_t seed);

struct FieldOutput {
  double density = 0.0;
  std::vector<double> radiance;
  Vec3 density_gradient = Vec3::Zero();
  Vec3 predicted_normal = Vec3::Zero();  // zero when the head is disabled
};

struct DerivedNormal {
  Vec3 normal = Vec3::Zero();
  bool degenerate = true;
};

// -grad / |grad|; flagged degenerate when |grad| < 1e-12.
DerivedNormal derived_normal(const Vec3& density_gradient);

// Batched forward/backward evaluator. Columns of every matrix are points.
template <typename T>
class FieldEvaluator {
 public:
  struct Flags {
    bool radiance = true;
    bool density_gradient = false;
  };

  // Per-call scratch and cached activations for backward().
  struct Workspace {
    Flags flags;
    Eigen::Index n = 0;
    MatX<T> pos_enc, dir_enc;
    std::vector<MatX<T>> trunk_z, trunk_a;
    MatX<T> raw_density;  // 1 x N
    MatX<T> density;      // 1 x N
    std::vector<MatX<T>> rad_z, rad_a;
    MatX<T> rgb;  // n x N
    MatX<T> normal_raw, pred_normal;
    // Tangents w.r.t. the three world axes, stacked [axis0 | axis1 | axis2].
    MatX<T> pos_enc_tangent;
    std::vector<MatX<T>> trunk_tangent_z, trunk_tangent_a;
    MatX<T> raw_density_grad;  // 3 x N
    MatX<T> density_grad;      // 3 x N
    // scratch for backward
    MatX<T> adj_a, adj_z, adj_tan_a, adj_tan_z;
    std::vector<MatX<T>> adj_z_from_tangent;
  };

  // Upstream adjoints; any pointer may be null (treated as zero).
  struct Adjoints {
    const MatX<T>* density = nullptr;       // 1 x N
    const MatX<T>* rgb = nullptr;           // n x N
    const MatX<T>* density_grad = nullptr;  // 3 x N
    const MatX<T>* pred_normal = nullptr;   // 3 x N
  };

  explicit FieldEvaluator(const FieldParamsT<T>& params);

  const FieldConfig& config() const { return params_.config; }
  const ParamLayout& layout() const { return layout_; }

  // positions: 3 x N world coordinates; dirs: 3 x N unit vectors (may be
  // null when flags.radiance is false).
  void forward(const MatX<T>& positions, const MatX<T>* dirs, Flags flags, Workspace& ws) const;

  // Accumulates dLoss/dtheta into grad (length layout().total()).
  void backward(Workspace& ws, const Adjoints& adj, T* grad) const;

 private:
  const T* block_ptr(int idx) const { return theta_.data() + layout_.blocks()[idx].offset; }
  Eigen::Map<const MatX<T>> weight(int idx) const;
  Eigen::Map<const VecX<T>> bias(int idx) const;

  void backward_aligned(Workspace& ws, const Adjoints& adj, T* grad) const;

  const FieldParamsT<T>& params_;
  ParamLayout layout_;
  // Eigen peels unaligned maps at address-dependent offsets, which changes
  // summation order. Parameters and gradients live in aligned buffers so the
  // results do not depend on where the caller's vectors happen to sit.
  VecX<T> theta_;
};

// Single-point query. Throws InvalidArgument when |d| differs from 1 by more
// than 1e-6.
template <typename T>
FieldOutput query(const FieldParamsT<T>& params, const Vec3& x, const Vec3& d);

// Batched forward + backward in one call. `upstream` supplies adjoints for
// density (1xN) and radiance (nxN); returns outputs, parameter gradient and
// per-point density gradient.
struct BatchGradResult {
  std::vector<FieldOutput> outputs;
  std::vector<double> param_grad;
};
template <typename T>
BatchGradResult query_batch_with_grad(const FieldParamsT<T>& params, const std::vector<Vec3>& points,
                                      const std::vector<Vec3>& dirs, const MatX<T>& adj_density,
                                      const MatX<T>& adj_rgb);

// ---------------------------------------------------------------- checkpoint

enum class Stage { Pretrain, Finetune };
std::string to_string(Stage s);
Stage stage_from_string(const std::string& s);

// Versioned binary container: magic, version, JSON metadata, float32 arrays.
struct Checkpoint {
  FieldParams params;
  std::int64_t step = 0;
  Stage stage = Stage::Pretrain;
  std::vector<float> adam_m;  // empty when optimizer state is not stored
  std::vector<float> adam_v;
  std::int64_t adam_t = 0;  // updates folded into the moments, across stages
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace hsnerf
