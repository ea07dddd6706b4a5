#pragma once

#include <cstdint>
#include <vector>

#include "hsnerf/losses.hpp"
#include "hsnerf/radiance_field.hpp"
#include "hsnerf/volume_renderer.hpp"

namespace hsnerf {

template <typename T>
struct RayBatch {
  std::vector<Ray> rays;
  MatX<T> targets;                       // n x B
  std::vector<std::uint8_t> foreground;  // B, or empty when unknown
};

struct ObjectiveOptions {
  RenderConfig render;
  LossWeights weights;
  bool jitter = true;
  std::uint64_t seed = 0;
  int chunk_rays = 64;
};

// Renders the batch, evaluates the composite loss and, when grad is non-null,
// accumulates dLoss/dtheta into it. Pixel terms average over the batch (the
// batch is drawn from the supervised pixel set); ray regularizers average
// over rays. Sample positions are treated as constants. The normal terms
// are active only when the field predicts normals.
template <typename T>
LossReport evaluate_objective(const FieldParamsT<T>& params, const RayBatch<T>& batch, const ObjectiveOptions& opts,
                              std::vector<T>* grad);

}  // namespace hsnerf
