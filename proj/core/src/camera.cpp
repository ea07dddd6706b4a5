#include "hsnerf/camera.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace hsnerf {

void CameraModel::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw InvalidArgument("camera focal lengths must be positive");
  if (width <= 0 || height <= 0) throw InvalidArgument("camera size must be positive");
  if (!(cx >= 0.0 && cx <= width && cy >= 0.0 && cy <= height)) {
    throw InvalidArgument("principal point outside the image");
  }
}

void Pose::validate(double tol) const {
  if (!rotation.allFinite() || !translation.allFinite()) throw InvalidArgument("pose is not finite");
  if ((rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff() > tol) {
    throw InvalidArgument("pose rotation is not orthonormal");
  }
  if (std::abs(rotation.determinant() - 1.0) > tol) throw InvalidArgument("pose rotation has det != +1");
}

std::optional<std::pair<double, double>> intersect_aabb(const Ray& ray, const Aabb& box) {
  double t0 = 0.0;
  double t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    const double d = ray.direction[a];
    const double o = ray.origin[a];
    if (std::abs(d) < 1e-300) {
      if (o < box.min[a] || o > box.max[a]) return std::nullopt;
      continue;
    }
    double ta = (box.min[a] - o) / d;
    double tb = (box.max[a] - o) / d;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return std::nullopt;
  }
  if (!(t1 > t0)) return std::nullopt;
  return std::make_pair(t0, t1);
}

std::optional<std::pair<double, double>> ray_bounds(const Ray& ray, const Aabb& box, double pad) {
  const auto hit = intersect_aabb(ray, box);
  if (!hit) return std::nullopt;
  const double len = hit->second - hit->first;
  return std::make_pair(std::max(0.0, hit->first - pad * len), hit->second + pad * len);
}

Ray pixel_ray(const CameraModel& cam, const Pose& pose, double px, double py) {
  const Vec3 d_cam((px - cam.cx) / cam.fx, (py - cam.cy) / cam.fy, 1.0);
  return Ray{pose.translation, (pose.rotation * d_cam).normalized()};
}

std::vector<Ray> generate_rays(const CameraModel& cam, const Pose& pose,
                               const std::vector<PixelIndex>& pixels) {
  std::vector<Ray> rays;
  rays.reserve(pixels.size());
  for (const auto& p : pixels) {
    if (p.x < 0 || p.y < 0 || p.x >= cam.width || p.y >= cam.height) {
      throw InvalidArgument("pixel (" + std::to_string(p.x) + "," + std::to_string(p.y) + ") out of bounds");
    }
    rays.push_back(pixel_ray(cam, pose, p.x + 0.5, p.y + 0.5));
  }
  return rays;
}

void write_poses(const std::filesystem::path& path, const std::vector<Pose>& poses) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write poses file: " + path.string());
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (std::size_t i = 0; i < poses.size(); ++i) {
    out << i;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) out << " " << poses[i].rotation(r, c);
    for (int k = 0; k < 3; ++k) out << " " << poses[i].translation[k];
    out << "\n";
  }
}

std::vector<Pose> read_poses(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read poses file: " + path.string());
  std::vector<Pose> poses;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos || line[0] == '#') continue;
    std::istringstream ss(line);
    long id = 0;
    Pose p;
    if (!(ss >> id)) throw IoError("bad pose line: " + line);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c)
        if (!(ss >> p.rotation(r, c))) throw IoError("bad pose line: " + line);
    for (int k = 0; k < 3; ++k)
      if (!(ss >> p.translation[k])) throw IoError("bad pose line: " + line);
    if (id != static_cast<long>(poses.size())) throw IoError("pose ids must be consecutive from 0");
    try {
      p.validate(1e-6);
    } catch (const InvalidArgument& e) {
      throw IoError(std::string("invalid pose: ") + e.what());
    }
    poses.push_back(p);
  }
  return poses;
}

void write_intrinsics(const std::filesystem::path& path, const CameraModel& cam) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write intrinsics file: " + path.string());
  out << std::setprecision(std::numeric_limits<double>::max_digits10) << cam.fx << " " << cam.fy
      << " " << cam.cx << " " << cam.cy << " " << cam.width << " " << cam.height << "\n";
}

CameraModel read_intrinsics(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read intrinsics file: " + path.string());
  CameraModel cam;
  if (!(in >> cam.fx >> cam.fy >> cam.cx >> cam.cy >> cam.width >> cam.height)) {
    throw IoError("malformed intrinsics file: " + path.string());
  }
  try {
    cam.validate();
  } catch (const InvalidArgument& e) {
    throw IoError(std::string("invalid intrinsics: ") + e.what());
  }
  return cam;
}

}  // namespace hsnerf
