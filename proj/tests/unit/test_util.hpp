#pragma once

#include <filesystem>
#include <random>
#include <string>

#include <gtest/gtest.h>

#include "hsnerf/hypercube.hpp"

namespace hsnerf::test {

// Fresh per-test directory under the system temp dir.
inline std::filesystem::path temp_dir() {
  const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
  auto dir = std::filesystem::temp_directory_path() / "hsnerf_tests" /
             (std::string(info->test_suite_name()) + "." + info->name());
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline HyperCube random_cube(int h, int w, int l, std::uint64_t seed, CubeKind kind = CubeKind::Calibrated,
                             double lo = 0.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> wl;
  for (int b = 0; b < l; ++b) wl.push_back(400.0 + 10.0 * b);
  std::vector<float> data(static_cast<std::size_t>(h) * w * l);
  for (auto& v : data) v = static_cast<float>(u(rng));
  return HyperCube(h, w, wl, std::move(data), kind);
}

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

}  // namespace hsnerf::test
