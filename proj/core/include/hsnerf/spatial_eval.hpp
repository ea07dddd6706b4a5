#pragma once

#include <filesystem>
#include <vector>

#include "hsnerf/point_cloud.hpp"

namespace hsnerf {

struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  RigidTransform compose(const RigidTransform& inner) const;  // this * inner
  void validate() const;  // orthonormal within 1e-9, det +1
};

// Per-point distance from each point of `a` to its nearest neighbour in `b`.
// Grid-indexed above 2000 points in b, brute force below.
std::vector<double> nearest_distances(const std::vector<Vec3>& a, const std::vector<Vec3>& b);
std::vector<double> nearest_distances_brute(const std::vector<Vec3>& a, const std::vector<Vec3>& b);

// All three values on [0, 1].
struct PrResult {
  double precision = 0.0;
  double recall = 0.0;
  double fscore = 0.0;
};

PrResult precision_recall(const std::vector<Vec3>& sc, const std::vector<Vec3>& gt, double eps);
// Same, from precomputed nearest distances (sc->gt and gt->sc).
PrResult precision_recall_from_distances(const std::vector<double>& d_sc, const std::vector<double>& d_gt, double eps);
double fscore(double precision, double recall);

struct IcpOptions {
  int max_iters = 50;
  double tol = 1e-8;
  // Both clouds are subsampled (deterministic stride) to at most this many
  // points before registration; 0 disables subsampling.
  std::size_t max_points = 50000;
};

struct IcpResult {
  RigidTransform transform;  // maps source onto target
  double rms = 0.0;
  int iterations = 0;
  std::vector<double> rms_history;
};

// Closed-form least-squares rigid fit of paired points (Kabsch).
RigidTransform fit_rigid(const std::vector<Vec3>& src, const std::vector<Vec3>& dst);

IcpResult icp_align(const std::vector<Vec3>& source, const std::vector<Vec3>& target, const IcpOptions& opts = {});

struct PrCurve {
  std::vector<double> eps;
  std::vector<double> precision, recall, fscore;  // [0, 1]
  double best_eps = 0.0;
  double best_fscore = 0.0;
  IcpResult alignment;
};

// Parses "lo:hi:step" (inclusive of hi within half a step).
std::vector<double> parse_eps_grid(const std::string& spec);

struct SweepOptions {
  bool align = true;
  IcpOptions icp;
};

PrCurve pr_sweep(const std::vector<Vec3>& sc, const std::vector<Vec3>& gt, const std::vector<double>& eps_grid,
                 const SweepOptions& opts = {});

// CSV columns epsilon_m,precision,recall,fscore with scores on the 0-100 scale.
void write_pr_csv(const std::filesystem::path& path, const PrCurve& curve);
// Precision (blue), recall (orange) and F (green) against eps with a dashed
// marker at the best threshold.
void write_pr_plot(const std::filesystem::path& path, const PrCurve& curve);

}  // namespace hsnerf
