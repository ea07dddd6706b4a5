#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "hsnerf/camera.hpp"
#include "hsnerf/hypercube.hpp"
#include "hsnerf/radiance_field.hpp"

namespace hsnerf {

// Sample positions along one ray. Sample i owns the interval
// [t_i, t_i + delta_i]; the last interval ends at far. s and ds are the same
// quantities normalized to [0,1] over [near, far].
struct RaySamples {
  Ray ray;
  double near = 0.0;
  double far = 1.0;
  std::vector<double> t, delta;
  std::vector<double> s, ds;

  std::size_t size() const { return t.size(); }
};

// Builds the derived arrays; t must be strictly increasing inside [near, far].
RaySamples make_samples(const Ray& ray, double near, double far, std::vector<double> t);

// One draw per stratum (jitter) or stratum midpoints.
RaySamples sample_stratified(const Ray& ray, double near, double far, int n, bool jitter, std::uint64_t seed);

// Inverse-CDF sampling of n extra points from the piecewise-constant
// histogram of coarse weights (floored at 1e-5), merged with the coarse t
// values. Bins are bounded by near, the midpoints between coarse samples and
// far. Falls back to stratified draws when every weight is zero.
RaySamples sample_importance(const RaySamples& coarse, std::span<const double> weights, int n, bool jitter,
                             std::uint64_t seed);

struct RenderOutput {
  std::vector<double> radiance;       // n, background composited
  std::vector<double> weights;        // S
  std::vector<double> transmittance;  // S + 1, last entry is the residual
  double accumulation = 0.0;
  double depth = 0.0;
  std::vector<double> densities;
  std::vector<std::vector<double>> radiances;
};

// w_i = T_i (1 - exp(-sigma_i delta_i)), T_i = exp(-sum_{j<i} sigma_j delta_j),
// C = sum w_i c_i + (1 - sum w_i) bg, depth = sum w_i t_i / max(sum w_i, 1e-8).
RenderOutput composite(const RaySamples& samples, std::span<const double> densities,
                       const std::vector<std::vector<double>>& radiances, std::span<const double> background);

// Weight kernel used by the batched paths. trans has S + 1 entries.
template <typename T>
void composite_weights(int n, const T* sigma, const T* delta, T* trans, T* weights);

// Given dLoss/dw_i, accumulates dLoss/dsigma_i into adj_sigma.
template <typename T>
void composite_weights_backward(int n, const T* delta, const T* trans, const T* weights, const T* adj_w,
                                T* adj_sigma);

struct RenderConfig {
  int coarse_samples = 64;
  int fine_samples = 64;  // 0 disables the importance pass
  double background = 1.0;
  double bounds_pad = 0.05;

  void validate() const;
};

// Two-pass sampling for a set of rays. The coarse pass queries density only.
// Rays missing the field bounds get an empty sample set. Per-ray streams are
// derived from (seed, ray index).
template <typename T>
std::vector<RaySamples> plan_samples(const FieldEvaluator<T>& field, const std::vector<Ray>& rays,
                                     const RenderConfig& cfg, bool jitter, std::uint64_t seed);

struct RenderedView {
  HyperCube cube;
  std::vector<float> depth;         // per pixel (m)
  std::vector<float> accumulation;  // per pixel
};

// Full-frame rendering in chunks of rays; deterministic (no jitter).
RenderedView render_view(const FieldParams& params, const CameraModel& cam, const Pose& pose,
                         const std::vector<double>& wavelengths, const RenderConfig& cfg, int chunk = 1024);

// Radiance of an arbitrary ray set, n x R, plus accumulation (forward only).
template <typename T>
MatX<T> render_rays(const FieldParamsT<T>& params, const std::vector<Ray>& rays, const RenderConfig& cfg,
                    std::vector<T>* accumulation = nullptr, std::vector<T>* depth = nullptr);

}  // namespace hsnerf
