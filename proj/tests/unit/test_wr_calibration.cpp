#include <cmath>
#include <queue>

#include "hsnerf/wr_calibration.hpp"
#include "test_util.hpp"

using namespace hsnerf;

namespace {

// White tarp whose response falls off radially toward the ROI edge.
HyperCube vignetted_tarp(int size, const std::vector<double>& e, double falloff = 0.3) {
  const int L = static_cast<int>(e.size());
  std::vector<double> wl;
  for (int b = 0; b < L; ++b) wl.push_back(450.0 + 50.0 * b);
  HyperCube c(size, size, wl, CubeKind::Raw);
  const double mid = (size - 1) / 2.0;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double r = std::hypot(x - mid, y - mid) / (mid * std::sqrt(2.0));
      const double f = 1.0 - falloff * std::pow(r, 4);
      for (int b = 0; b < L; ++b) c(y, x, b) = static_cast<float>(e[b] * f);
    }
  return c;
}

// Flat tarp with a dimmed border band of the given width.
HyperCube edge_tarp(int size, const std::vector<double>& e, int border) {
  const int L = static_cast<int>(e.size());
  std::vector<double> wl;
  for (int b = 0; b < L; ++b) wl.push_back(450.0 + 50.0 * b);
  HyperCube c(size, size, wl, CubeKind::Raw);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const bool edge = std::min({x, y, size - 1 - x, size - 1 - y}) < border;
      for (int b = 0; b < L; ++b) c(y, x, b) = static_cast<float>(e[b] * (edge ? 0.5 : 1.0));
    }
  return c;
}

bool eight_connected(const Mask& m) {
  std::size_t first = m.size();
  for (std::size_t i = 0; i < m.size(); ++i)
    if (m.at(i)) {
      first = i;
      break;
    }
  if (first == m.size()) return true;
  std::vector<char> seen(m.size(), 0);
  std::queue<std::size_t> q;
  q.push(first);
  seen[first] = 1;
  std::size_t n = 0;
  while (!q.empty()) {
    const auto cur = q.front();
    q.pop();
    ++n;
    const int cy = static_cast<int>(cur) / m.width(), cx = static_cast<int>(cur) % m.width();
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const int y = cy + dy, x = cx + dx;
        if (y < 0 || x < 0 || y >= m.height() || x >= m.width() || !m(y, x)) continue;
        const auto id = static_cast<std::size_t>(y) * m.width() + x;
        if (!seen[id]) {
          seen[id] = 1;
          q.push(id);
        }
      }
  }
  return n == m.count();
}

}  // namespace

TEST(WrCalibration, UniformRoiHasZeroDeviation) {
  HyperCube c(4, 4, {500.0, 600.0}, std::vector<float>(32, 0.8f), CubeKind::Raw);
  const auto dev = deviation_map(c, Mask(4, 4, true));
  for (double v : dev.values) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(refine_mask(dev, 70.0), Mask(4, 4, true));
}

TEST(WrCalibration, DeviationHandCase) {
  // Two ROI pixels, one band: values 1 and 1.2, mean 1.1.
  HyperCube c(1, 3, {500.0}, std::vector<float>{1.0f, 1.2f, 9.0f}, CubeKind::Raw);
  Mask roi(1, 3);
  roi.set(0, 0, true);
  roi.set(0, 1, true);
  const auto dev = deviation_map(c, roi);
  const double mu = (1.0 + double(1.2f)) / 2.0;
  EXPECT_NEAR(dev.values[0], (mu - 1.0) / mu, 1e-12);
  EXPECT_NEAR(dev.values[1], (double(1.2f) - mu) / mu, 1e-12);
  EXPECT_EQ(dev.values[2], 0.0);  // outside the ROI
}

TEST(WrCalibration, EdgePixelsDeviateMoreThanCenter) {
  const auto c = vignetted_tarp(21, {0.6, 0.8, 0.9});
  const auto dev = deviation_map(c, Mask(21, 21, true));
  EXPECT_GT(dev.values[0], dev.values[10 * 21 + 10]);
  EXPECT_GT(dev.values[20 * 21 + 20], dev.values[10 * 21 + 12]);
}

TEST(WrCalibration, PercentileInterpolatesOrderStatistics) {
  EXPECT_DOUBLE_EQ(percentile({1.0, 2.0, 3.0, 4.0, 5.0}, 50.0), 3.0);
  EXPECT_DOUBLE_EQ(percentile({1.0, 2.0, 3.0, 4.0}, 50.0), 2.5);
  EXPECT_DOUBLE_EQ(percentile({4.0, 1.0, 3.0, 2.0}, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(percentile({4.0, 1.0, 3.0, 2.0}, 100.0), 4.0);
  EXPECT_THROW(percentile({}, 50.0), InvalidArgument);
}

TEST(WrCalibration, ThresholdRetainsAtLeastP) {
  const auto c = vignetted_tarp(30, {0.5, 0.7});
  const auto dev = deviation_map(c, Mask(30, 30, true));
  for (double p : {30.0, 65.0, 70.0, 75.0, 90.0}) {
    const auto thr = threshold_mask(dev, p);
    EXPECT_GE(static_cast<double>(thr.mask.count()) / 900.0, p / 100.0 - 1e-12) << p;
  }
}

TEST(WrCalibration, RefinedMaskIsConnectedSubsetOfRoi) {
  const auto c = vignetted_tarp(32, {0.5, 0.7, 0.9});
  Mask roi(32, 32);
  for (int y = 2; y < 30; ++y)
    for (int x = 3; x < 29; ++x) roi.set(y, x, true);
  const Mask m = refine_mask(deviation_map(c, roi), 70.0);
  EXPECT_GT(m.count(), 0u);
  for (std::size_t i = 0; i < m.size(); ++i) {
    EXPECT_TRUE(!m.at(i) || roi.at(i));
  }
  EXPECT_TRUE(eight_connected(m));
  // The vignetted ROI corners sit furthest from the mean spectrum.
  EXPECT_FALSE(m(2, 3));
  EXPECT_FALSE(m(29, 28));
}

TEST(WrCalibration, LargestComponentKeepsBiggerBlob) {
  Mask m(20, 20);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 10; ++x) m.set(y, x, true);  // 50 pixels
  for (int y = 10; y < 15; ++y)
    for (int x = 10; x < 16; ++x) m.set(y, x, true);  // 30 pixels
  const Mask out = largest_component(m);
  EXPECT_EQ(out.count(), 50u);
  EXPECT_TRUE(out(0, 0));
  EXPECT_FALSE(out(10, 10));
  EXPECT_EQ(largest_component(Mask(3, 3)).count(), 0u);
}

TEST(WrCalibration, MorphologyBorderConventions) {
  const Mask full(4, 4, true);
  EXPECT_EQ(erode3x3(full), full);  // outside counts as foreground for erosion
  Mask dot(5, 5);
  dot.set(2, 2, true);
  EXPECT_EQ(dilate3x3(dot).count(), 9u);
  EXPECT_EQ(erode3x3(dot).count(), 0u);
}

TEST(WrCalibration, WrMeanCases) {
  const HyperCube c = test::random_cube(3, 3, 4, 21, CubeKind::Raw, 0.1, 2.0);
  Mask one(3, 3);
  one.set(2, 1, true);
  const auto m1 = wr_mean(c, one);
  for (int b = 0; b < 4; ++b) EXPECT_DOUBLE_EQ(m1[b], c(2, 1, b));
  Mask two = one;
  two.set(0, 2, true);
  const auto m2 = wr_mean(c, two);
  for (int b = 0; b < 4; ++b) EXPECT_NEAR(m2[b], 0.5 * (double(c(2, 1, b)) + c(0, 2, b)), 1e-12);
}

TEST(WrCalibration, SmoothingHandCaseAndProperties) {
  const std::vector<double> ramp{1, 2, 3, 4, 5};
  const auto s = smooth_spectrum(ramp, 3);
  const std::vector<double> expect{4.0 / 3.0, 2.0, 3.0, 4.0, 14.0 / 3.0};
  for (int i = 0; i < 5; ++i) EXPECT_NEAR(s[i], expect[i], 1e-12);
  EXPECT_EQ(smooth_spectrum(ramp, 1), ramp);
  const std::vector<double> flat(7, 0.42);
  for (double v : smooth_spectrum(flat, 5)) EXPECT_NEAR(v, 0.42, 1e-15);
  const std::vector<double> wiggle{0.3, 0.9, 0.1, 0.7, 0.5, 0.2, 0.8};
  for (double v : smooth_spectrum(wiggle, 5)) {
    EXPECT_GE(v, 0.1 - 1e-15);
    EXPECT_LE(v, 0.9 + 1e-15);
  }
  EXPECT_THROW(smooth_spectrum(ramp, 2), InvalidArgument);
  EXPECT_THROW(smooth_spectrum(ramp, 7), InvalidArgument);
}

TEST(WrCalibration, SelfNormalizationAndClipping) {
  const std::vector<double> ref{0.5, 0.8};
  HyperCube c(2, 2, {500.0, 600.0}, CubeKind::Raw);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 2; ++x) {
      c(y, x, 0) = 0.5f;
      c(y, x, 1) = 0.8f;
    }
  const HyperCube out = calibrate(c, ref);
  for (float v : out.data()) EXPECT_NEAR(v, 1.0f, 1e-6f);
  c(0, 0, 0) = 1.0f;  // twice the reference
  EXPECT_EQ(calibrate(c, ref)(0, 0, 0), 1.0f);
}

TEST(WrCalibration, CalibratingAgainstUnitReferenceIsIdentity) {
  const HyperCube c = test::random_cube(3, 3, 4, 5);
  const std::vector<double> ones(4, 1.0);
  EXPECT_EQ(calibrate(c, ones, false), c);
  EXPECT_THROW(calibrate(c, ones, true), InvalidArgument);
}

TEST(WrCalibration, RecoversKnownReflectance) {
  // Flat illumination so the smoothing window is exact; the acceptance
  // suite covers a wavelength-dependent illuminant with window 1.
  const std::vector<double> e(6, 0.7);
  const HyperCube wr = edge_tarp(40, e, 2);
  const WrCalibration calib = build_calibration(wr, Mask(40, 40, true));
  EXPECT_EQ(calib.pixel_count, 36u * 36u);
  HyperCube raw(5, 5, wr.wavelengths(), CubeKind::Raw);
  std::vector<double> refl;
  for (int i = 0; i < 5 * 5 * 6; ++i) refl.push_back(0.05 + 0.9 * ((i * 37) % 101) / 100.0);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 5; ++x)
      for (int b = 0; b < 6; ++b) raw(y, x, b) = static_cast<float>(refl[(y * 5 + x) * 6 + b] * e[b]);
  const HyperCube r = calibrate(raw, calib);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 5; ++x)
      for (int b = 0; b < 6; ++b) EXPECT_NEAR(r(y, x, b), refl[(y * 5 + x) * 6 + b], 1e-6);
}

TEST(WrCalibration, SweepGrowsWithPercentile) {
  const auto wr = vignetted_tarp(40, {0.5, 0.6, 0.9});
  const std::vector<double> ps{65.0, 70.0, 75.0};
  const auto rows = percentile_sweep(wr, Mask(40, 40, true), ps);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_LT(rows[0].pixel_count, rows[1].pixel_count);
  EXPECT_LT(rows[1].pixel_count, rows[2].pixel_count);

  HyperCube flat(6, 6, {500.0}, std::vector<float>(36, 0.9f), CubeKind::Raw);
  const auto same = percentile_sweep(flat, Mask(6, 6, true), ps);
  for (const auto& r : same) EXPECT_EQ(r.mask, Mask(6, 6, true));
}

TEST(WrCalibration, SweepReportFiles) {
  const auto dir = test::temp_dir();
  const auto wr = vignetted_tarp(16, {0.5, 0.6});
  const std::vector<double> ps{65.0, 70.0};
  write_sweep_report(percentile_sweep(wr, Mask(16, 16, true), ps), dir);
  EXPECT_TRUE(std::filesystem::exists(dir / "sweep.csv"));
  EXPECT_TRUE(std::filesystem::exists(dir / "mask_p65.png"));
  EXPECT_TRUE(std::filesystem::exists(dir / "mask_p70.png"));
}

TEST(WrCalibration, CalibrationSpectrumPositive) {
  const auto wr = vignetted_tarp(16, {0.4, 0.6, 0.8, 0.7, 0.5});
  const auto calib = build_calibration(wr, Mask(16, 16, true));
  EXPECT_EQ(calib.pixel_count, calib.mask.count());
  EXPECT_GT(calib.pixel_count, 0u);
  for (double v : calib.smoothed_spectrum) EXPECT_GT(v, 0.0);
}
