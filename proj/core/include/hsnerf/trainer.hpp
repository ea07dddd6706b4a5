#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "hsnerf/dataset.hpp"
#include "hsnerf/losses.hpp"
#include "hsnerf/objective.hpp"
#include "hsnerf/radiance_field.hpp"
#include "hsnerf/spectral_eval.hpp"
#include "hsnerf/volume_renderer.hpp"

namespace hsnerf {

struct TrainConfig {
  int pretrain_iters = 3000;
  int finetune_iters = 3000;
  int rays_per_batch = 1024;
  double lr_init = 5e-4;
  double lr_final = 5e-5;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-15;
  // Same pair in both stages unless the caller sets them apart.
  LossWeights pretrain_weights = spectral_weights(0.25, 0.75);
  LossWeights finetune_weights = spectral_weights(0.25, 0.75);
  std::uint64_t seed = 0;
  int log_interval = 100;
  int eval_interval = 0;    // 0 disables the periodic callback
  double grad_clip = 0.0;   // global-norm clip, 0 = off
  int chunk_rays = 64;
  FieldConfig field;        // n_channels and bounds are taken from the dataset
  RenderConfig render;

  void validate() const;
  const LossWeights& weights(Stage s) const { return s == Stage::Pretrain ? pretrain_weights : finetune_weights; }
  int iters(Stage s) const { return s == Stage::Pretrain ? pretrain_iters : finetune_iters; }
};

std::string train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const std::string& text);

// Everything needed to continue training bit-exactly. Per-step random
// streams derive from (seed, stage, step), so no generator state is stored.
struct TrainState {
  FieldParams params;
  std::vector<float> adam_m, adam_v;
  std::int64_t step = 0;  // iterations completed in the current stage
  // Moments carry over from pretraining into fine-tuning, so bias correction
  // counts every update since init rather than restarting per stage.
  std::int64_t adam_t = 0;
  Stage stage = Stage::Pretrain;
};

// Field sized for the dataset (channels = bands, bounds = aabb).
TrainState init_state(const TrainConfig& cfg, const Dataset& ds);
Checkpoint to_checkpoint(const TrainState& s);
TrainState from_checkpoint(const Checkpoint& c);

struct PixelRef {
  int view = 0;
  int x = 0;
  int y = 0;
};

struct SampledBatch {
  RayBatch<float> batch;
  std::vector<PixelRef> pixels;
};

// Pixel pool for one stage: all pixels of the training views (Pretrain) or
// the masked ones (Finetune).
class RayPool {
 public:
  RayPool(const Dataset& ds, Stage stage);
  std::size_t size() const { return pixels_.size(); }
  SampledBatch draw(std::size_t n, std::mt19937_64& rng) const;

 private:
  const Dataset& ds_;
  std::vector<PixelRef> pixels_;
};

SampledBatch sample_ray_batch(const Dataset& ds, Stage stage, std::size_t n, std::mt19937_64& rng);

// lr0 * (lr_end / lr0)^(t / T)
double learning_rate(const TrainConfig& cfg, std::int64_t t, std::int64_t T);

struct TrainHooks {
  std::function<void(const TrainState&, const LossReport&)> on_step;
  std::function<void(const TrainState&)> on_eval;       // every eval_interval steps
  std::function<void(const TrainState&)> on_stage_end;  // after each stage of two_stage
  std::filesystem::path loss_csv_dir;                   // loss_<stage>.csv when non-empty
  // Stop after this many steps of the current call (for resume tests); < 0 = no limit.
  std::int64_t max_steps = -1;
};

// Runs the remaining iterations of `stage`. Entering a new stage resets the
// step counter; optimizer moments restart at the first step of every stage.
TrainState train_stage(TrainState state, const TrainConfig& cfg, const Dataset& ds, Stage stage,
                       const TrainHooks& hooks = {});

// Pretrain then finetune; writes the final checkpoint when out is non-empty.
TrainState two_stage(const TrainConfig& cfg, const Dataset& ds, const std::filesystem::path& out = {},
                     const TrainHooks& hooks = {});

struct WeightPair {
  double ang = 0.0;
  double hsi = 0.0;
};

std::vector<WeightPair> default_grid();
std::string pair_label(const WeightPair& p);

struct AblationRow {
  WeightPair pair;
  std::string label;
  Stage stage = Stage::Pretrain;
  SpectralMetrics metrics;
};

// Full two-stage run per pair (each pair retrains from the same seed) with
// held-out evaluation after each stage.
std::vector<AblationRow> ablation_grid(const TrainConfig& cfg, const Dataset& ds, const std::vector<WeightPair>& grid,
                                       const EvalOptions& eval,
                                       const std::function<void(const AblationRow&)>& on_row = {});

void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationRow>& rows);

}  // namespace hsnerf
