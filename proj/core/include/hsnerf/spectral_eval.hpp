#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "hsnerf/dataset.hpp"
#include "hsnerf/hypercube.hpp"
#include "hsnerf/radiance_field.hpp"
#include "hsnerf/volume_renderer.hpp"

namespace hsnerf {

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation, 0 for a single value
};
MeanSd mean_sd(std::span<const double> values);

// All metrics take an optional pixel mask; null means every pixel.
double sam(const HyperCube& pred, const HyperCube& gt, const Mask* omega = nullptr, double delta = 1e-8);
double spectral_rmse(const HyperCube& pred, const HyperCube& gt, const Mask* omega = nullptr);
// Per-band SSIM from global statistics over omega, averaged over bands.
double hsi_ssim(const HyperCube& pred, const HyperCube& gt, const Mask* omega = nullptr);
double hsi_psnr(const HyperCube& pred, const HyperCube& gt, const Mask* omega = nullptr, double delta = 1e-10);

struct ViewMetrics {
  int view_id = 0;
  double sam = 0.0;
  double rmse = 0.0;
  double ssim = 0.0;
  double psnr = 0.0;
};

struct SpectralMetrics {
  MeanSd sam, rmse, ssim, psnr;
  int n_views = 0;
  std::size_t rays_per_view = 0;
  std::vector<ViewMetrics> views;
};

enum class MaskPolicy { FullFrame, Foreground };
std::string to_string(MaskPolicy p);
MaskPolicy mask_policy_from_string(const std::string& s);

// Aggregates per-view metrics of already rendered cubes.
SpectralMetrics evaluate_views(const std::vector<HyperCube>& preds, const std::vector<HyperCube>& gts,
                               const std::vector<const Mask*>& masks, const std::vector<int>& ids);

struct EvalOptions {
  MaskPolicy policy = MaskPolicy::FullFrame;
  RenderConfig render;
  int chunk = 1024;
  std::filesystem::path out_dir;  // metrics.csv and side-by-side PNGs when non-empty
  std::string dataset_name = "synthetic";
  BandTriplet triplet{650.0, 540.0, 470.0};
};

SpectralMetrics evaluate_heldout(const FieldParams& params, const Dataset& ds, const EvalOptions& opts);

// dataset,view_id,sam_rad,rmse,ssim,psnr_db plus mean and sd rows.
void write_metrics_csv(const std::filesystem::path& path, const std::string& dataset, const SpectralMetrics& m);

// Ground truth on the left, prediction on the right.
Image8 side_by_side(const HyperCube& gt, const HyperCube& pred, const BandTriplet& triplet);

}  // namespace hsnerf
