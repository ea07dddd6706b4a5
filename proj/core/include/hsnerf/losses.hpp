#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hsnerf/common.hpp"
#include "hsnerf/volume_renderer.hpp"

namespace hsnerf {

// Multipliers of the composite objective. prop is kept for configuration
// parity with nerfacto but has no loss attached (there is no proposal
// network).
struct LossWeights {
  double hsi = 0.75;
  double ang = 0.25;
  double prop = 1.0;
  double dist = 0.002;
  double ori = 1e-4;
  double pn = 1e-3;
  double ang_eps = 1e-8;

  void validate() const;
  bool operator==(const LossWeights&) const = default;
};

// Default multipliers with the given spectral pair.
LossWeights spectral_weights(double lambda_ang, double lambda_hsi);

struct LossReport {
  double hsi = 0.0;
  double ang = 0.0;
  double dist = 0.0;
  double ori = 0.0;
  double pn = 0.0;
  double total = 0.0;
  std::size_t batch_size = 0;
  double mask_coverage = 0.0;  // fraction of batch rays on foreground pixels
};

// sum_k lambda_k * term_k over the five active terms.
double weighted_total(const LossReport& r, const LossWeights& w);

// Pixel losses. Rows are pixels, columns are channels; omega selects pixels
// (empty span = all). Optional gradients w.r.t. pred have pred's shape.
double loss_hsi(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target, std::span<const std::uint8_t> omega = {},
                Eigen::MatrixXd* grad = nullptr);
double loss_angular(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target,
                    std::span<const std::uint8_t> omega = {}, double eps = 1e-8, Eigen::MatrixXd* grad = nullptr);

// Ray regularizers, one ray each. Degenerate normals (valid == 0) are
// skipped by the normal terms.
double loss_distortion(const RaySamples& samples, std::span<const double> weights);
double loss_orientation(std::span<const Vec3> normals, std::span<const std::uint8_t> valid, const Vec3& view_dir,
                        std::span<const double> weights);
double loss_predicted_normal(std::span<const Vec3> predicted, std::span<const Vec3> derived,
                             std::span<const std::uint8_t> valid, std::span<const double> weights);

// Per-item kernels shared by the batched objective. Each returns the term's
// value and, when the gradient pointers are non-null, accumulates
// scale * dterm into them.
namespace kernel {

template <typename T>
T hsi(int n, const T* pred, const T* target, T scale, T* g_pred);

template <typename T>
T angular(int n, const T* pred, const T* target, T eps, T scale, T* g_pred);

// Pairwise |m_i - m_j| over interval midpoints plus the (1/3) sum w^2 ds
// self term, evaluated in O(S) with prefix sums. m must be nondecreasing.
template <typename T>
T distortion(int S, const T* mid, const T* ds, const T* w, T scale, T* g_w);

// normals/predicted are 3 x S column-major.
template <typename T>
T orientation(int S, const T* normals, const std::uint8_t* valid, const T* view, const T* w, T scale, T* g_w,
              T* g_normals);

template <typename T>
T predicted_normal(int S, const T* derived, const T* predicted, const std::uint8_t* valid, const T* w, T scale,
                   T* g_w, T* g_derived, T* g_predicted);

}  // namespace kernel

// CSV row helpers: "step,L_hsi,L_ang,L_dist,L_ori,L_pn,total".
std::string loss_csv_header();
std::string loss_csv_row(std::int64_t step, const LossReport& r);

}  // namespace hsnerf
