#include "hsnerf/scene_synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "hsnerf/dataset.hpp"
#include "json.hpp"

namespace hsnerf {

using json = nlohmann::json;

double Reflectance::operator()(double nm) const {
  double v = baseline;
  for (const auto& p : peaks) {
    const double z = (nm - p.center_nm) / p.width_nm;
    v += p.amplitude * std::exp(-0.5 * z * z);
  }
  return std::clamp(v, 0.0, 1.0);
}

std::vector<double> Reflectance::sample(std::span<const double> wavelengths) const {
  std::vector<double> out;
  out.reserve(wavelengths.size());
  for (double nm : wavelengths) out.push_back((*this)(nm));
  return out;
}

double Primitive::intersect(const Ray& ray) const {
  constexpr double inf = std::numeric_limits<double>::infinity();
  if (kind == PrimitiveKind::Sphere) {
    const double r = size.x();
    const Vec3 oc = ray.origin - center;
    const double b = oc.dot(ray.direction);
    const double c = oc.squaredNorm() - r * r;
    const double disc = b * b - c;
    if (disc < 0.0) return inf;
    const double s = std::sqrt(disc);
    const double t0 = -b - s;
    const double t1 = -b + s;
    if (t0 > 0.0) return t0;
    if (t1 > 0.0) return t1;
    return inf;
  }
  const auto hit = intersect_aabb(ray, bounds());
  if (!hit) return inf;
  return hit->first > 0.0 ? hit->first : hit->second;
}

Aabb Primitive::bounds() const {
  const Vec3 h = kind == PrimitiveKind::Sphere ? Vec3::Constant(size.x()) : size;
  return Aabb{center - h, center + h};
}

double Primitive::surface_area() const {
  if (kind == PrimitiveKind::Sphere) return 4.0 * std::numbers::pi * size.x() * size.x();
  return 8.0 * (size.x() * size.y() + size.y() * size.z() + size.x() * size.z());
}

void AnalyticScene::validate() const {
  if (!((aabb.max - aabb.min).array() > 0.0).all()) throw InvalidArgument("scene aabb is empty");
  for (const auto& p : primitives) {
    if (!(p.size.array() > 0.0).all()) throw InvalidArgument("primitive size must be positive");
    const Aabb b = p.bounds();
    if (!aabb.contains(b.min) || !aabb.contains(b.max)) throw InvalidArgument("primitive extends outside the scene aabb");
    for (const auto& pk : p.reflectance.peaks) {
      if (!(pk.width_nm > 0.0)) throw InvalidArgument("reflectance peak width must be positive");
    }
  }
}

AnalyticScene default_scene() {
  AnalyticScene s;
  Primitive sphere;
  sphere.kind = PrimitiveKind::Sphere;
  sphere.center = Vec3(0.05, -0.04, 0.0);
  sphere.size = Vec3::Constant(0.5);
  sphere.reflectance.baseline = 0.08;
  sphere.reflectance.peaks = {{0.35, 650.0, 60.0}, {0.55, 900.0, 150.0}, {0.12, 550.0, 30.0}};
  s.primitives.push_back(sphere);
  s.aabb = Aabb{Vec3::Constant(-0.7), Vec3::Constant(0.7)};
  return s;
}

void TurntableConfig::validate() const {
  if (n_views < 2) throw InvalidArgument("turntable needs at least two views");
  if (!(radius > 0.0)) throw InvalidArgument("turntable radius must be positive");
  if (!std::isfinite(elevation) || std::abs(elevation) >= std::numbers::pi / 2) {
    throw InvalidArgument("turntable elevation must lie strictly between -pi/2 and pi/2");
  }
  intrinsics.validate();
}

TurntableConfig default_turntable(int n_views, int size) {
  TurntableConfig cfg;
  cfg.n_views = n_views;
  const double f = 1.5 * size;
  cfg.intrinsics = CameraModel{f, f, 0.5 * size, 0.5 * size, size, size};
  return cfg;
}

std::vector<Pose> pose_ring(const TurntableConfig& cfg) {
  cfg.validate();
  const Vec3 up = Vec3::UnitZ();
  std::vector<Pose> poses;
  poses.reserve(cfg.n_views);
  for (int k = 0; k < cfg.n_views; ++k) {
    const double az = 2.0 * std::numbers::pi * k / cfg.n_views;
    const double ce = std::cos(cfg.elevation);
    const Vec3 pos = cfg.look_at + cfg.radius * Vec3(ce * std::cos(az), ce * std::sin(az), std::sin(cfg.elevation));
    const Vec3 to = cfg.look_at - pos;
    if (to.norm() < 1e-12) throw InvalidArgument("look_at coincides with the camera position");
    const Vec3 fwd = to.normalized();
    const Vec3 right = fwd.cross(up).normalized();
    const Vec3 down = fwd.cross(right);
    Pose p;
    p.rotation.col(0) = right;
    p.rotation.col(1) = down;
    p.rotation.col(2) = fwd;
    p.translation = pos;
    poses.push_back(p);
  }
  return poses;
}

AnalyticView render_analytic(const AnalyticScene& scene, const Pose& pose, const CameraModel& cam,
                             const std::vector<double>& wavelengths) {
  pose.validate(1e-6);
  cam.validate();
  const int L = static_cast<int>(wavelengths.size());
  AnalyticView v{HyperCube(cam.height, cam.width, wavelengths, CubeKind::Calibrated),
                 std::vector<double>(static_cast<std::size_t>(cam.width) * cam.height,
                                     std::numeric_limits<double>::infinity()),
                 Mask(cam.height, cam.width)};
  const std::vector<double> bg = scene.background.sample(wavelengths);
  std::vector<std::vector<double>> spectra;
  for (const auto& p : scene.primitives) spectra.push_back(p.reflectance.sample(wavelengths));

  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      const Ray ray = pixel_ray(cam, pose, x + 0.5, y + 0.5);
      double best = std::numeric_limits<double>::infinity();
      int hit = -1;
      for (std::size_t i = 0; i < scene.primitives.size(); ++i) {
        const double t = scene.primitives[i].intersect(ray);
        if (t < best) {
          best = t;
          hit = static_cast<int>(i);
        }
      }
      const std::vector<double>& s = hit >= 0 ? spectra[hit] : bg;
      for (int b = 0; b < L; ++b) v.cube(y, x, b) = static_cast<float>(s[b]);
      if (hit >= 0) {
        v.depth[static_cast<std::size_t>(y) * cam.width + x] = best;
        v.mask.set(y, x, true);
      }
    }
  }
  return v;
}

std::vector<double> linspace(double lo, double hi, int n) {
  if (n < 1) throw InvalidArgument("linspace needs n >= 1");
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) out[i] = n == 1 ? lo : lo + (hi - lo) * i / (n - 1);
  return out;
}

std::vector<int> eval_split(int n_views, double eval_fraction) {
  if (n_views < 2) throw InvalidArgument("split needs at least two views");
  if (!(eval_fraction > 0.0 && eval_fraction < 1.0)) throw InvalidArgument("eval fraction must be in (0,1)");
  int n_eval = static_cast<int>(std::lround(eval_fraction * n_views));
  n_eval = std::clamp(n_eval, 1, n_views - 1);
  std::vector<int> ids;
  for (int k = 0; k < n_eval; ++k) ids.push_back(static_cast<int>((k + 0.5) * n_views / n_eval));
  return ids;
}

namespace {

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 vec_from(const json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 3) throw InvalidArgument("expected a 3-vector");
  return Vec3(v[0], v[1], v[2]);
}

json reflectance_json(const Reflectance& r) {
  json peaks = json::array();
  for (const auto& p : r.peaks) peaks.push_back({{"amplitude", p.amplitude}, {"center_nm", p.center_nm}, {"width_nm", p.width_nm}});
  return {{"baseline", r.baseline}, {"peaks", peaks}};
}

Reflectance reflectance_from(const json& j) {
  Reflectance r;
  r.baseline = j.at("baseline").get<double>();
  for (const auto& p : j.at("peaks")) {
    r.peaks.push_back({p.at("amplitude").get<double>(), p.at("center_nm").get<double>(), p.at("width_nm").get<double>()});
  }
  return r;
}

json scene_json(const AnalyticScene& s) {
  json prims = json::array();
  for (const auto& p : s.primitives) {
    prims.push_back({{"kind", p.kind == PrimitiveKind::Sphere ? "sphere" : "box"},
                     {"center", vec_json(p.center)},
                     {"size", vec_json(p.size)},
                     {"reflectance", reflectance_json(p.reflectance)}});
  }
  return {{"primitives", prims},
          {"background", reflectance_json(s.background)},
          {"aabb", {{"min", vec_json(s.aabb.min)}, {"max", vec_json(s.aabb.max)}}}};
}

AnalyticScene scene_from(const json& j) {
  AnalyticScene s;
  for (const auto& p : j.at("primitives")) {
    Primitive prim;
    const auto kind = p.at("kind").get<std::string>();
    if (kind == "sphere") {
      prim.kind = PrimitiveKind::Sphere;
    } else if (kind == "box") {
      prim.kind = PrimitiveKind::Box;
    } else {
      throw InvalidArgument("unknown primitive kind: " + kind);
    }
    prim.center = vec_from(p.at("center"));
    prim.size = vec_from(p.at("size"));
    prim.reflectance = reflectance_from(p.at("reflectance"));
    s.primitives.push_back(prim);
  }
  s.background = reflectance_from(j.at("background"));
  s.aabb.min = vec_from(j.at("aabb").at("min"));
  s.aabb.max = vec_from(j.at("aabb").at("max"));
  s.validate();
  return s;
}

}  // namespace

std::string scene_to_json(const AnalyticScene& scene) { return scene_json(scene).dump(); }

AnalyticScene scene_from_json(const std::string& text) {
  try {
    return scene_from(json::parse(text));
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("bad scene description: ") + e.what());
  }
}

void emit_dataset(const AnalyticScene& scene, const TurntableConfig& cfg, const SynthOptions& opts,
                  const std::filesystem::path& out_dir) {
  const Dataset ds = synthesize_dataset(scene, cfg, opts);
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "views", ec);
  std::filesystem::create_directories(out_dir / "masks", ec);
  if (ec) throw IoError("cannot create dataset directories under " + out_dir.string());

  for (std::size_t i = 0; i < ds.views.size(); ++i) {
    const auto stem = view_stem(out_dir, static_cast<int>(i));
    write_bil(ds.views[i], stem.string() + ".hdr", stem.string() + ".bil");
    char name[32];
    std::snprintf(name, sizeof(name), "view_%03zu.png", i);
    ds.masks[i].write_png(out_dir / "masks" / name);
  }
  write_poses(out_dir / "poses.txt", ds.poses);
  write_intrinsics(out_dir / "intrinsics.txt", cfg.intrinsics);

  json meta{{"format", "hsnerf-dataset"},
            {"version", 1},
            {"n_views", cfg.n_views},
            {"wavelengths", ds.wavelengths},
            {"aabb", {{"min", vec_json(scene.aabb.min)}, {"max", vec_json(scene.aabb.max)}}},
            {"train_ids", ds.train_ids},
            {"eval_ids", ds.eval_ids},
            {"seed", opts.seed},
            {"noise_std", opts.noise_std},
            {"turntable", {{"radius", cfg.radius}, {"elevation", cfg.elevation}, {"look_at", vec_json(cfg.look_at)}}},
            {"scene", scene_json(scene)}};
  std::ofstream out(out_dir / "dataset.json");
  if (!out) throw IoError("cannot write dataset.json");
  out << meta.dump(2) << "\n";
}

std::vector<Vec3> sample_surface(const AnalyticScene& scene, std::size_t n_points) {
  std::vector<Vec3> pts;
  if (scene.primitives.empty() || n_points == 0) return pts;
  double total_area = 0.0;
  for (const auto& p : scene.primitives) total_area += p.surface_area();
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (const auto& p : scene.primitives) {
    const auto n = static_cast<std::size_t>(std::llround(n_points * p.surface_area() / total_area));
    if (n == 0) continue;
    if (p.kind == PrimitiveKind::Sphere) {
      const double r = p.size.x();
      for (std::size_t i = 0; i < n; ++i) {
        const double z = 1.0 - 2.0 * (i + 0.5) / n;
        const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
        const double phi = golden * i;
        pts.push_back(p.center + r * Vec3(rho * std::cos(phi), rho * std::sin(phi), z));
      }
      continue;
    }
    // Six faces, each an axis-aligned grid sized by its area share.
    const Vec3& h = p.size;
    for (int axis = 0; axis < 3; ++axis) {
      const int u = (axis + 1) % 3;
      const int v = (axis + 2) % 3;
      const double face_area = 4.0 * h[u] * h[v];
      const double share = n * face_area / p.surface_area();
      const double spacing = std::sqrt(face_area / std::max(share, 1.0));
      const int nu = std::max(1, static_cast<int>(std::lround(2.0 * h[u] / spacing)));
      const int nv = std::max(1, static_cast<int>(std::lround(2.0 * h[v] / spacing)));
      for (int side = -1; side <= 1; side += 2) {
        for (int i = 0; i < nu; ++i) {
          for (int j = 0; j < nv; ++j) {
            Vec3 q;
            q[axis] = side * h[axis];
            q[u] = -h[u] + (i + 0.5) * 2.0 * h[u] / nu;
            q[v] = -h[v] + (j + 0.5) * 2.0 * h[v] / nv;
            pts.push_back(p.center + q);
          }
        }
      }
    }
  }
  return pts;
}

double surface_distance(const AnalyticScene& scene, const Vec3& p) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& prim : scene.primitives) {
    double d;
    if (prim.kind == PrimitiveKind::Sphere) {
      d = std::abs((p - prim.center).norm() - prim.size.x());
    } else {
      const Vec3 q = (p - prim.center).cwiseAbs() - prim.size;
      const double outside = q.cwiseMax(0.0).norm();
      d = outside > 0.0 ? outside : -q.maxCoeff();
    }
    best = std::min(best, d);
  }
  return best;
}

}  // namespace hsnerf
