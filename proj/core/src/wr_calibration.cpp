#include "hsnerf/wr_calibration.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>

#include "hsnerf/common.hpp"

namespace hsnerf {

std::vector<double> DeviationMap::roi_values() const {
  std::vector<double> out;
  out.reserve(roi.count());
  for (std::size_t i = 0; i < values.size(); ++i)
    if (roi.at(i)) out.push_back(values[i]);
  return out;
}

namespace {

void check_same_grid(const HyperCube& cube, const Mask& mask, const char* who) {
  if (cube.height() != mask.height() || cube.width() != mask.width()) {
    throw InvalidArgument(std::string(who) + ": mask dimensions differ from cube");
  }
}

}  // namespace

DeviationMap deviation_map(const HyperCube& wr_cube, const Mask& coarse_roi) {
  check_same_grid(wr_cube, coarse_roi, "deviation_map");
  if (coarse_roi.count() == 0) throw InvalidArgument("deviation_map: empty coarse ROI");

  DeviationMap dev;
  dev.roi = coarse_roi;
  dev.roi_mean = wr_mean(wr_cube, coarse_roi);
  for (std::size_t b = 0; b < dev.roi_mean.size(); ++b) {
    if (!(dev.roi_mean[b] > 0.0)) {
      throw InvalidArgument("deviation_map: preliminary WR mean is zero in band " + std::to_string(b));
    }
  }
  const int L = wr_cube.bands();
  dev.values.assign(wr_cube.pixel_count(), 0.0);
  for (std::size_t p = 0; p < wr_cube.pixel_count(); ++p) {
    if (!coarse_roi.at(p)) continue;
    const auto s = wr_cube.spectrum(p);
    double acc = 0.0;
    for (int b = 0; b < L; ++b) acc += std::abs((s[b] - dev.roi_mean[b]) / dev.roi_mean[b]);
    dev.values[p] = acc / L;
  }
  return dev;
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) throw InvalidArgument("percentile of empty set");
  if (!(p >= 0.0 && p <= 100.0)) throw InvalidArgument("percentile must lie in [0,100]");
  std::sort(values.begin(), values.end());
  const double pos = (values.size() - 1) * p / 100.0;
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + (values[hi] - values[lo]) * frac;
}

ThresholdMask threshold_mask(const DeviationMap& dev, double p) {
  if (!(p > 0.0 && p < 100.0)) throw InvalidArgument("refine_mask: percentile must lie in (0,100)");
  ThresholdMask out;
  out.threshold = percentile(dev.roi_values(), p);
  out.mask = Mask(dev.height(), dev.width());
  for (std::size_t i = 0; i < dev.values.size(); ++i) {
    out.mask.set(i, dev.roi.at(i) && dev.values[i] <= out.threshold);
  }
  return out;
}

Mask dilate3x3(const Mask& m) {
  Mask out(m.height(), m.width());
  for (int y = 0; y < m.height(); ++y) {
    for (int x = 0; x < m.width(); ++x) {
      bool any = false;
      for (int dy = -1; dy <= 1 && !any; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int yy = y + dy;
          const int xx = x + dx;
          if (yy >= 0 && xx >= 0 && yy < m.height() && xx < m.width() && m(yy, xx)) {
            any = true;
            break;
          }
        }
      }
      out.set(y, x, any);
    }
  }
  return out;
}

Mask erode3x3(const Mask& m) {
  Mask out(m.height(), m.width());
  for (int y = 0; y < m.height(); ++y) {
    for (int x = 0; x < m.width(); ++x) {
      bool all = true;
      for (int dy = -1; dy <= 1 && all; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int yy = y + dy;
          const int xx = x + dx;
          if (yy >= 0 && xx >= 0 && yy < m.height() && xx < m.width() && !m(yy, xx)) {
            all = false;
            break;
          }
        }
      }
      out.set(y, x, all);
    }
  }
  return out;
}

Mask largest_component(const Mask& m) {
  const int H = m.height();
  const int W = m.width();
  std::vector<int> label(static_cast<std::size_t>(H) * W, -1);
  std::vector<std::size_t> sizes;
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < label.size(); ++start) {
    if (!m.at(start) || label[start] >= 0) continue;
    const int id = static_cast<int>(sizes.size());
    std::size_t size = 0;
    stack.push_back(start);
    label[start] = id;
    while (!stack.empty()) {
      const std::size_t cur = stack.back();
      stack.pop_back();
      ++size;
      const int cy = static_cast<int>(cur / W);
      const int cx = static_cast<int>(cur % W);
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int yy = cy + dy;
          const int xx = cx + dx;
          if (yy < 0 || xx < 0 || yy >= H || xx >= W) continue;
          const std::size_t n = static_cast<std::size_t>(yy) * W + xx;
          if (m.at(n) && label[n] < 0) {
            label[n] = id;
            stack.push_back(n);
          }
        }
      }
    }
    sizes.push_back(size);
  }
  Mask out(H, W);
  if (sizes.empty()) return out;
  const int best = static_cast<int>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
  for (std::size_t i = 0; i < label.size(); ++i) out.set(i, label[i] == best);
  return out;
}

Mask refine_mask(const DeviationMap& dev, double p) {
  const ThresholdMask thr = threshold_mask(dev, p);
  const Mask closed = erode3x3(dilate3x3(thr.mask));
  Mask opened = dilate3x3(erode3x3(closed));
  for (std::size_t i = 0; i < opened.size(); ++i) opened.set(i, opened.at(i) && dev.roi.at(i));
  Mask result = largest_component(opened);
  if (result.count() == 0) throw NumericError("refine_mask: no pixels survive morphological filtering");
  return result;
}

std::vector<double> wr_mean(const HyperCube& wr_cube, const Mask& mask) {
  check_same_grid(wr_cube, mask, "wr_mean");
  const int L = wr_cube.bands();
  std::vector<double> acc(L, 0.0);
  std::size_t n = 0;
  for (std::size_t p = 0; p < wr_cube.pixel_count(); ++p) {
    if (!mask.at(p)) continue;
    const auto s = wr_cube.spectrum(p);
    for (int b = 0; b < L; ++b) acc[b] += s[b];
    ++n;
  }
  if (n == 0) throw InvalidArgument("wr_mean: empty mask");
  for (auto& v : acc) v /= static_cast<double>(n);
  return acc;
}

std::vector<double> smooth_spectrum(std::span<const double> mu, int window) {
  const int L = static_cast<int>(mu.size());
  if (window < 1 || window % 2 == 0) throw InvalidArgument("smooth_spectrum: window must be odd and >= 1");
  if (window > L) throw InvalidArgument("smooth_spectrum: window longer than spectrum");
  const int half = window / 2;
  auto reflect = [L](int i) {
    if (i < 0) return -i - 1;
    if (i >= L) return 2 * L - i - 1;
    return i;
  };
  std::vector<double> out(L);
  for (int i = 0; i < L; ++i) {
    double acc = 0.0;
    for (int k = -half; k <= half; ++k) acc += mu[reflect(i + k)];
    out[i] = acc / window;
  }
  return out;
}

WrCalibration build_calibration(const HyperCube& wr_cube, const Mask& coarse_roi,
                                const WrOptions& options) {
  const DeviationMap dev = deviation_map(wr_cube, coarse_roi);
  WrCalibration calib;
  calib.percentile_p = options.percentile;
  calib.mask = refine_mask(dev, options.percentile);
  calib.pixel_count = calib.mask.count();
  calib.mean_spectrum = wr_mean(wr_cube, calib.mask);
  calib.smoothed_spectrum = smooth_spectrum(calib.mean_spectrum, options.smoothing_window);
  for (double v : calib.smoothed_spectrum) {
    if (!(v > 0.0)) throw NumericError("white reference spectrum is not strictly positive");
  }
  return calib;
}

HyperCube calibrate(const HyperCube& cube, std::span<const double> reference, bool require_raw) {
  if (require_raw && cube.kind() != CubeKind::Raw) throw InvalidArgument("calibrate: input cube is not raw");
  if (static_cast<int>(reference.size()) != cube.bands()) {
    throw InvalidArgument("calibrate: reference band count differs from cube");
  }
  for (double v : reference) {
    if (!(v > 0.0)) throw InvalidArgument("calibrate: non-positive reference band");
  }
  const int L = cube.bands();
  std::vector<float> out(cube.data().begin(), cube.data().end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = out[i] / reference[i % L];
    out[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
  }
  return HyperCube(cube.height(), cube.width(), cube.wavelengths(), std::move(out), CubeKind::Calibrated);
}

HyperCube calibrate(const HyperCube& cube, const WrCalibration& calib) {
  return calibrate(cube, calib.smoothed_spectrum, true);
}

std::vector<SweepRow> percentile_sweep(const HyperCube& wr_cube, const Mask& coarse_roi,
                                       std::span<const double> ps) {
  if (ps.empty()) throw InvalidArgument("percentile_sweep: no percentiles given");
  const DeviationMap dev = deviation_map(wr_cube, coarse_roi);
  std::vector<SweepRow> rows;
  for (double p : ps) {
    SweepRow row;
    row.percentile = p;
    row.mask = refine_mask(dev, p);
    row.pixel_count = row.mask.count();
    std::vector<double> inside;
    inside.reserve(row.pixel_count);
    for (std::size_t i = 0; i < dev.values.size(); ++i)
      if (row.mask.at(i)) inside.push_back(dev.values[i]);
    row.median_deviation = percentile(inside, 50.0);
    row.p95_deviation = percentile(inside, 95.0);
    row.max_deviation = *std::max_element(inside.begin(), inside.end());
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_sweep_report(const std::vector<SweepRow>& rows, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::ofstream csv(out_dir / "sweep.csv");
  if (!csv) throw IoError("cannot write sweep.csv in " + out_dir.string());
  csv << "p,pixel_count,median_D,p95_D,max_D\n" << std::setprecision(10);
  for (const auto& r : rows) {
    csv << r.percentile << "," << r.pixel_count << "," << r.median_deviation << ","
        << r.p95_deviation << "," << r.max_deviation << "\n";
    char name[64];
    std::snprintf(name, sizeof(name), "mask_p%g.png", r.percentile);
    r.mask.write_png(out_dir / name);
  }
}

}  // namespace hsnerf
