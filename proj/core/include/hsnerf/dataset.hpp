#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "hsnerf/camera.hpp"
#include "hsnerf/hypercube.hpp"
#include "hsnerf/scene_synth.hpp"

namespace hsnerf {

// A posed multi-view hyperspectral capture on disk.
struct Dataset {
  CameraModel camera;
  std::vector<Pose> poses;
  std::vector<HyperCube> views;
  std::vector<Mask> masks;  // empty when the capture has none
  std::vector<double> wavelengths;
  Aabb aabb;
  std::vector<int> train_ids;
  std::vector<int> eval_ids;
  std::optional<AnalyticScene> scene;  // present for synthetic captures

  int bands() const { return static_cast<int>(wavelengths.size()); }
  bool has_masks() const { return !masks.empty(); }
  void validate() const;
};

Dataset load_dataset(const std::filesystem::path& dir);

// In-memory version of emit_dataset.
Dataset synthesize_dataset(const AnalyticScene& scene, const TurntableConfig& cfg, const SynthOptions& opts);

std::filesystem::path view_stem(const std::filesystem::path& dir, int id);

}  // namespace hsnerf
