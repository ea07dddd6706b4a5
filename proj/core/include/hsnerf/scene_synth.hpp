#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <vector>

#include "hsnerf/camera.hpp"
#include "hsnerf/hypercube.hpp"

namespace hsnerf {

struct GaussianPeak {
  double amplitude = 0.0;
  double center_nm = 0.0;
  double width_nm = 1.0;  // standard deviation
};

// baseline + sum of Gaussian peaks, clipped to [0,1].
struct Reflectance {
  double baseline = 0.0;
  std::vector<GaussianPeak> peaks;

  double operator()(double nm) const;
  std::vector<double> sample(std::span<const double> wavelengths) const;
};

enum class PrimitiveKind { Sphere, Box };

struct Primitive {
  PrimitiveKind kind = PrimitiveKind::Sphere;
  Vec3 center = Vec3::Zero();
  // Sphere: size.x() is the radius. Box: half extents.
  Vec3 size = Vec3::Constant(0.5);
  Reflectance reflectance;

  // Nearest hit distance along the ray, or +inf.
  double intersect(const Ray& ray) const;
  Aabb bounds() const;
  double surface_area() const;
};

struct AnalyticScene {
  std::vector<Primitive> primitives;
  // View-invariant background; constant 1.0 stands for the white chamber.
  Reflectance background{1.0, {}};
  Aabb aabb;

  void validate() const;
};

// One sphere with an apple-like reflectance (low visible, red bump, strong
// NIR plateau) centered slightly off the origin.
AnalyticScene default_scene();

struct TurntableConfig {
  int n_views = 20;
  double radius = 2.0;
  double elevation = 0.15;  // rad above the look_at plane
  Vec3 look_at = Vec3::Zero();
  CameraModel intrinsics;

  void validate() const;
};

// Desk-scale defaults: 64x64 pixels, fx = fy = 96.
TurntableConfig default_turntable(int n_views = 20, int size = 64);

// Camera-to-world poses equally spaced in azimuth, z up, looking at look_at.
std::vector<Pose> pose_ring(const TurntableConfig& cfg);

struct AnalyticView {
  HyperCube cube;
  std::vector<double> depth;  // ray distance per pixel, +inf on background
  Mask mask;
};

AnalyticView render_analytic(const AnalyticScene& scene, const Pose& pose, const CameraModel& cam,
                             const std::vector<double>& wavelengths);

// Evenly spaced wavelength grid.
std::vector<double> linspace(double lo, double hi, int n);

struct SynthOptions {
  int bands = 8;
  double lambda_min = 400.0;
  double lambda_max = 1000.0;
  double eval_fraction = 0.1;
  double noise_std = 0.0;
  std::uint64_t seed = 0;
};

// Held-out view ids: round(fraction * n) (at least one when n >= 2), evenly
// spread over the ring.
std::vector<int> eval_split(int n_views, double eval_fraction);

// Writes views/view_XXX.{hdr,bil}, masks/view_XXX.png, poses.txt,
// intrinsics.txt and dataset.json under out_dir.
void emit_dataset(const AnalyticScene& scene, const TurntableConfig& cfg, const SynthOptions& opts,
                  const std::filesystem::path& out_dir);

// Approximately uniform points on the union of primitive surfaces
// (Fibonacci lattice for spheres, face grids for boxes).
std::vector<Vec3> sample_surface(const AnalyticScene& scene, std::size_t n_points);

// Unsigned distance from p to the nearest primitive surface.
double surface_distance(const AnalyticScene& scene, const Vec3& p);

// dataset.json scene block.
std::string scene_to_json(const AnalyticScene& scene);
AnalyticScene scene_from_json(const std::string& text);

}  // namespace hsnerf
