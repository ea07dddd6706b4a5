#include "hsnerf/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "hsnerf/parallel.hpp"
#include "json.hpp"

namespace hsnerf {

using json = nlohmann::json;

std::filesystem::path view_stem(const std::filesystem::path& dir, int id) {
  char name[32];
  std::snprintf(name, sizeof(name), "view_%03d", id);
  return dir / "views" / name;
}

void Dataset::validate() const {
  camera.validate();
  if (views.size() != poses.size()) throw InvalidArgument("dataset: view and pose counts differ");
  if (!masks.empty() && masks.size() != views.size()) throw InvalidArgument("dataset: mask count differs from view count");
  for (std::size_t i = 0; i < views.size(); ++i) {
    const auto& v = views[i];
    if (v.height() != camera.height || v.width() != camera.width) {
      throw InvalidArgument("dataset: view " + std::to_string(i) + " size does not match the intrinsics");
    }
    if (v.wavelengths() != wavelengths) throw InvalidArgument("dataset: inconsistent wavelength grids");
    if (!masks.empty() && (masks[i].height() != v.height() || masks[i].width() != v.width())) {
      throw InvalidArgument("dataset: mask " + std::to_string(i) + " size does not match its view");
    }
  }
  auto check_ids = [&](const std::vector<int>& ids) {
    for (int id : ids)
      if (id < 0 || id >= static_cast<int>(views.size())) throw InvalidArgument("dataset: split id out of range");
  };
  check_ids(train_ids);
  check_ids(eval_ids);
  if (train_ids.empty()) throw InvalidArgument("dataset: no training views");
}

Dataset load_dataset(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("dataset directory not found: " + dir.string());
  std::ifstream in(dir / "dataset.json");
  if (!in) throw IoError("missing dataset.json in " + dir.string());
  std::stringstream ss;
  ss << in.rdbuf();

  Dataset ds;
  json meta;
  try {
    meta = json::parse(ss.str());
    ds.wavelengths = meta.at("wavelengths").get<std::vector<double>>();
    const auto lo = meta.at("aabb").at("min").get<std::vector<double>>();
    const auto hi = meta.at("aabb").at("max").get<std::vector<double>>();
    if (lo.size() != 3 || hi.size() != 3) throw IoError("dataset.json: bad aabb");
    ds.aabb = Aabb{Vec3(lo[0], lo[1], lo[2]), Vec3(hi[0], hi[1], hi[2])};
    ds.train_ids = meta.at("train_ids").get<std::vector<int>>();
    ds.eval_ids = meta.at("eval_ids").get<std::vector<int>>();
    if (meta.contains("scene")) ds.scene = scene_from_json(meta.at("scene").dump());
  } catch (const json::exception& e) {
    throw IoError(std::string("dataset.json: ") + e.what());
  }

  ds.camera = read_intrinsics(dir / "intrinsics.txt");
  ds.poses = read_poses(dir / "poses.txt");
  const bool masks = std::filesystem::is_directory(dir / "masks");
  for (std::size_t i = 0; i < ds.poses.size(); ++i) {
    const auto stem = view_stem(dir, static_cast<int>(i));
    ds.views.push_back(read_bil(stem.string() + ".hdr", stem.string() + ".bil"));
    if (masks) {
      char name[32];
      std::snprintf(name, sizeof(name), "view_%03zu.png", i);
      ds.masks.push_back(Mask::from_png(dir / "masks" / name));
    }
  }
  ds.validate();
  return ds;
}

Dataset synthesize_dataset(const AnalyticScene& scene, const TurntableConfig& cfg, const SynthOptions& opts) {
  scene.validate();
  cfg.validate();
  if (opts.bands < 1) throw InvalidArgument("band count must be >= 1");
  if (!(opts.lambda_max > opts.lambda_min) || opts.lambda_min < 0.0) throw InvalidArgument("bad wavelength range");
  if (!(opts.noise_std >= 0.0)) throw InvalidArgument("noise std must be >= 0");

  Dataset ds;
  ds.camera = cfg.intrinsics;
  ds.poses = pose_ring(cfg);
  ds.wavelengths = linspace(opts.lambda_min, opts.lambda_max, opts.bands);
  ds.aabb = scene.aabb;
  ds.eval_ids = eval_split(cfg.n_views, opts.eval_fraction);
  for (int i = 0; i < cfg.n_views; ++i)
    if (std::find(ds.eval_ids.begin(), ds.eval_ids.end(), i) == ds.eval_ids.end()) ds.train_ids.push_back(i);
  ds.scene = scene;

  std::vector<AnalyticView> rendered(ds.poses.size());
  parallel_for(ds.poses.size(), [&](std::size_t i) {
    rendered[i] = render_analytic(scene, ds.poses[i], cfg.intrinsics, ds.wavelengths);
    if (opts.noise_std > 0.0) {
      std::mt19937_64 rng(derive_seed(opts.seed, {i}));
      std::normal_distribution<double> noise(0.0, opts.noise_std);
      for (float& x : rendered[i].cube.mutable_data()) x = static_cast<float>(std::clamp(x + noise(rng), 0.0, 1.0));
    }
  });
  for (auto& v : rendered) {
    ds.views.push_back(std::move(v.cube));
    ds.masks.push_back(std::move(v.mask));
  }
  ds.validate();
  return ds;
}

}  // namespace hsnerf
