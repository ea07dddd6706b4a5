#pragma once

#include <filesystem>
#include <optional>
#include <utility>
#include <vector>

#include "hsnerf/common.hpp"

namespace hsnerf {

// Pinhole intrinsics in pixels. Camera frame: +x right, +y down, +z forward.
struct CameraModel {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.5;
  double cy = 0.5;
  int width = 1;
  int height = 1;

  void validate() const;
  bool operator==(const CameraModel&) const = default;
};

// Rigid camera-to-world transform.
struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  Vec3 optical_axis() const { return rotation.col(2); }
  void validate(double tol = 1e-9) const;
};

struct Ray {
  Vec3 origin;
  Vec3 direction;  // unit length
};

struct PixelIndex {
  int x = 0;
  int y = 0;
};

struct Aabb {
  Vec3 min = Vec3::Constant(-1.0);
  Vec3 max = Vec3::Constant(1.0);

  Vec3 center() const { return 0.5 * (min + max); }
  Vec3 half_extent() const { return 0.5 * (max - min); }
  bool contains(const Vec3& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }
};

// Slab test. Returns the parametric [t_enter, t_exit] clipped to t >= 0, or
// nullopt when the ray misses.
std::optional<std::pair<double, double>> intersect_aabb(const Ray& ray, const Aabb& box);

// Near/far bounds from the AABB hit interval widened by `pad` (fraction of
// its length) on both sides, with near clamped at zero.
std::optional<std::pair<double, double>> ray_bounds(const Ray& ray, const Aabb& box, double pad = 0.05);

// Rays through pixel centers (x+0.5, y+0.5).
Ray pixel_ray(const CameraModel& cam, const Pose& pose, double px, double py);
std::vector<Ray> generate_rays(const CameraModel& cam, const Pose& pose,
                               const std::vector<PixelIndex>& pixels);

// Text formats. Poses: "view_id r00 r01 r02 r10 r11 r12 r20 r21 r22 tx ty tz"
// per line. Intrinsics: "fx fy cx cy width height".
void write_poses(const std::filesystem::path& path, const std::vector<Pose>& poses);
std::vector<Pose> read_poses(const std::filesystem::path& path);
void write_intrinsics(const std::filesystem::path& path, const CameraModel& cam);
CameraModel read_intrinsics(const std::filesystem::path& path);

}  // namespace hsnerf
