#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "hsnerf/hypercube.hpp"

namespace hsnerf {

// Per-pixel mean absolute relative deviation from the ROI mean spectrum.
// `values` is full-frame (H*W, row-major); only pixels inside `roi` carry a
// deviation, the rest are zero and must be ignored.
struct DeviationMap {
  Mask roi;
  std::vector<double> values;
  std::vector<double> roi_mean;  // preliminary mean spectrum over the ROI

  int height() const { return roi.height(); }
  int width() const { return roi.width(); }
  // Deviations of ROI pixels in raster order.
  std::vector<double> roi_values() const;
};

struct WrCalibration {
  Mask mask;
  std::vector<double> mean_spectrum;
  std::vector<double> smoothed_spectrum;
  double percentile_p = 70.0;
  std::size_t pixel_count = 0;
};

struct WrOptions {
  double percentile = 70.0;
  int smoothing_window = 5;
};

// Result of the percentile threshold before any morphology.
struct ThresholdMask {
  Mask mask;
  double threshold = 0.0;
};

DeviationMap deviation_map(const HyperCube& wr_cube, const Mask& coarse_roi);

// Linear interpolation between order statistics (position (n-1)*p/100).
double percentile(std::vector<double> values, double p);

ThresholdMask threshold_mask(const DeviationMap& dev, double p);

// 3x3 square structuring element; outside the frame counts as background
// for dilation and as foreground for erosion.
Mask dilate3x3(const Mask& m);
Mask erode3x3(const Mask& m);
// Largest 8-connected component; ties go to the component met first in
// raster order. Returns an all-false mask for an empty input.
Mask largest_component(const Mask& m);

// Threshold at the p-th percentile, 3x3 closing then opening, restriction
// to the ROI, then the largest 8-connected component.
Mask refine_mask(const DeviationMap& dev, double p);

std::vector<double> wr_mean(const HyperCube& wr_cube, const Mask& mask);

// Centered moving average with half-sample symmetric boundaries.
std::vector<double> smooth_spectrum(std::span<const double> mu, int window);

WrCalibration build_calibration(const HyperCube& wr_cube, const Mask& coarse_roi,
                                const WrOptions& options = {});

HyperCube calibrate(const HyperCube& cube, const WrCalibration& calib);
// Normalises by an explicit reference spectrum; used by calibrate().
HyperCube calibrate(const HyperCube& cube, std::span<const double> reference,
                    bool require_raw = true);

struct SweepRow {
  double percentile = 0.0;
  std::size_t pixel_count = 0;
  double median_deviation = 0.0;
  double p95_deviation = 0.0;
  double max_deviation = 0.0;
  Mask mask;
};

std::vector<SweepRow> percentile_sweep(const HyperCube& wr_cube, const Mask& coarse_roi,
                                       std::span<const double> ps);

// Writes sweep.csv plus mask_p<NN>.png per row into out_dir.
void write_sweep_report(const std::vector<SweepRow>& rows, const std::filesystem::path& out_dir);

}  // namespace hsnerf
