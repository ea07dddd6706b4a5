#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>

#include "hsnerf/dataset.hpp"
#include "hsnerf/scene_synth.hpp"
#include "test_util.hpp"

using namespace hsnerf;

namespace {

AnalyticScene centered_sphere(double radius, const Reflectance& refl) {
  AnalyticScene s;
  Primitive p;
  p.center = Vec3::Zero();
  p.size = Vec3::Constant(radius);
  p.reflectance = refl;
  s.primitives.push_back(p);
  s.aabb = Aabb{Vec3::Constant(-1.0), Vec3::Constant(1.0)};
  return s;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(PoseRing, FourViewsAtZeroElevation) {
  TurntableConfig cfg = default_turntable(4, 16);
  cfg.elevation = 0.0;
  const auto poses = pose_ring(cfg);
  ASSERT_EQ(poses.size(), 4u);
  const double expect_deg[] = {0.0, 90.0, 180.0, 270.0};
  for (int k = 0; k < 4; ++k) {
    const Vec3& t = poses[k].translation;
    double az = std::atan2(t.y(), t.x()) * 180.0 / std::numbers::pi;
    if (az < -1e-9) az += 360.0;
    EXPECT_NEAR(az, expect_deg[k], 1e-9);
    EXPECT_NEAR(t.z(), 0.0, 1e-12);
    // The optical axis passes through look_at.
    const Vec3 to = cfg.look_at - t;
    EXPECT_NEAR(poses[k].optical_axis().cross(to).norm(), 0.0, 1e-12);
    EXPECT_GT(poses[k].optical_axis().dot(to), 0.0);
  }
}

TEST(PoseRing, RotationsAreProper) {
  TurntableConfig cfg = default_turntable(60, 16);
  cfg.elevation = 0.4;
  for (const auto& p : pose_ring(cfg)) {
    EXPECT_LT((p.rotation.transpose() * p.rotation - Mat3::Identity()).norm(), 1e-12);
    EXPECT_NEAR(p.rotation.determinant(), 1.0, 1e-12);
  }
}

TEST(PoseRing, SixtyViewsStepSixDegrees) {
  const auto poses = pose_ring(default_turntable(60, 16));
  for (int k = 0; k < 60; ++k) {
    const Vec3& a = poses[k].translation;
    const Vec3& b = poses[(k + 1) % 60].translation;
    const double step = std::atan2(a.x() * b.y() - a.y() * b.x(), a.x() * b.x() + a.y() * b.y());
    EXPECT_NEAR(step * 180.0 / std::numbers::pi, 6.0, 1e-9);
  }
}

TEST(PoseRing, RelabelingKeepsTheSameSet) {
  // Rotating every pose by one azimuth step maps the ring onto itself.
  const TurntableConfig cfg = default_turntable(12, 16);
  const auto poses = pose_ring(cfg);
  const double step = 2.0 * std::numbers::pi / 12;
  const Mat3 rz = Eigen::AngleAxisd(step, Vec3::UnitZ()).toRotationMatrix();
  for (int k = 0; k < 12; ++k) {
    const Pose& next = poses[(k + 1) % 12];
    EXPECT_LT((rz * poses[k].rotation - next.rotation).norm(), 1e-12);
    EXPECT_LT((rz * poses[k].translation - next.translation).norm(), 1e-12);
  }
}

TEST(PoseRing, RejectsBadConfig) {
  TurntableConfig cfg = default_turntable(1, 16);
  EXPECT_THROW(pose_ring(cfg), InvalidArgument);
  cfg = default_turntable(4, 16);
  cfg.radius = 0.0;
  EXPECT_THROW(pose_ring(cfg), InvalidArgument);
}

TEST(RenderAnalytic, EmptySceneIsBackground) {
  AnalyticScene s;
  s.background = Reflectance{0.9, {}};
  const auto wl = linspace(400.0, 1000.0, 5);
  const TurntableConfig cfg = default_turntable(3, 8);
  const auto v = render_analytic(s, pose_ring(cfg)[1], cfg.intrinsics, wl);
  for (float x : v.cube.data()) EXPECT_FLOAT_EQ(x, 0.9f);
  EXPECT_EQ(v.mask.count(), 0u);
  for (double d : v.depth) EXPECT_TRUE(std::isinf(d));
}

TEST(RenderAnalytic, CenterPixelIsSphereReflectance) {
  Reflectance refl{0.1, {{0.5, 700.0, 80.0}}};
  const auto scene = centered_sphere(0.5, refl);
  const auto wl = linspace(400.0, 1000.0, 8);
  const TurntableConfig cfg = default_turntable(4, 32);
  const auto v = render_analytic(scene, pose_ring(cfg)[0], cfg.intrinsics, wl);
  const auto expect = refl.sample(wl);
  for (int b = 0; b < 8; ++b) EXPECT_FLOAT_EQ(v.cube(16, 16, b), static_cast<float>(expect[b]));
  EXPECT_TRUE(v.mask(16, 16));
}

TEST(RenderAnalytic, DiscRadiusMatchesPinholeProjection) {
  const double r = 0.3;
  const auto scene = centered_sphere(r, Reflectance{0.5, {}});
  TurntableConfig cfg = default_turntable(4, 128);
  cfg.elevation = 0.0;
  const auto v = render_analytic(scene, pose_ring(cfg)[0], cfg.intrinsics, {500.0});
  const double d = cfg.radius;
  const double expect_px = cfg.intrinsics.fx * r / std::sqrt(d * d - r * r);
  int row = 0;
  for (int x = 0; x < 128; ++x) row += v.mask(64, x) ? 1 : 0;
  EXPECT_NEAR(row / 2.0, expect_px, 1.0);
}

TEST(RenderAnalytic, MaskEqualsFiniteDepth) {
  const auto scene = default_scene();
  const TurntableConfig cfg = default_turntable(5, 24);
  for (const auto& pose : pose_ring(cfg)) {
    const auto v = render_analytic(scene, pose, cfg.intrinsics, {500.0, 800.0});
    for (int y = 0; y < 24; ++y)
      for (int x = 0; x < 24; ++x) EXPECT_EQ(v.mask(y, x), std::isfinite(v.depth[y * 24 + x]));
    EXPECT_GT(v.mask.count(), 0u);
  }
}

TEST(RenderAnalytic, BackgroundIsViewInvariant) {
  const auto scene = default_scene();
  const TurntableConfig cfg = default_turntable(6, 16);
  const auto wl = linspace(400.0, 1000.0, 4);
  for (const auto& pose : pose_ring(cfg)) {
    const auto v = render_analytic(scene, pose, cfg.intrinsics, wl);
    for (int b = 0; b < 4; ++b) EXPECT_EQ(v.cube(0, 0, b), 1.0f);
  }
}

TEST(Reflectance, StaysInUnitInterval) {
  Reflectance big{0.8, {{0.9, 600.0, 50.0}}};
  Reflectance neg{-0.2, {}};
  for (double nm = 380.0; nm <= 1020.0; nm += 7.0) {
    EXPECT_LE(big(nm), 1.0);
    EXPECT_GE(neg(nm), 0.0);
  }
}

TEST(SceneJson, RoundTrip) {
  const auto s = default_scene();
  const auto r = scene_from_json(scene_to_json(s));
  ASSERT_EQ(r.primitives.size(), 1u);
  EXPECT_EQ(r.primitives[0].center, s.primitives[0].center);
  EXPECT_EQ(r.primitives[0].reflectance(650.0), s.primitives[0].reflectance(650.0));
}

TEST(EvalSplit, NinetyTen) {
  const auto ids = eval_split(20, 0.1);
  EXPECT_EQ(ids.size(), 2u);
  EXPECT_NE(ids[0], ids[1]);
  const Dataset ds = synthesize_dataset(default_scene(), default_turntable(20, 8), SynthOptions{});
  EXPECT_EQ(ds.train_ids.size(), 18u);
  EXPECT_EQ(ds.eval_ids.size(), 2u);
}

TEST(EmitDataset, FileCountsAndDeterminism) {
  const auto a = test::temp_dir() / "a";
  const auto b = test::temp_dir() / "b";
  SynthOptions opts;
  opts.noise_std = 0.01;
  opts.seed = 42;
  const auto cfg = default_turntable(20, 64);
  emit_dataset(default_scene(), cfg, opts, a);
  emit_dataset(default_scene(), cfg, opts, b);

  auto count = [](const std::filesystem::path& dir, const std::string& ext) {
    int n = 0;
    for (const auto& e : std::filesystem::directory_iterator(dir)) n += e.path().extension() == ext;
    return n;
  };
  EXPECT_EQ(count(a / "views", ".bil"), 20);
  EXPECT_EQ(count(a / "views", ".hdr"), 20);
  EXPECT_EQ(count(a / "masks", ".png"), 20);
  EXPECT_TRUE(std::filesystem::exists(a / "poses.txt"));
  EXPECT_TRUE(std::filesystem::exists(a / "intrinsics.txt"));

  for (const auto& e : std::filesystem::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(e.path(), a);
    EXPECT_EQ(slurp(e.path()), slurp(b / rel)) << rel;
  }

  const Dataset ds = load_dataset(a);
  EXPECT_EQ(ds.views.size(), 20u);
  EXPECT_EQ(ds.bands(), 8);
  EXPECT_EQ(ds.views[0].height(), 64);
}

TEST(EmitDataset, SeedChangesNoise) {
  SynthOptions o1, o2;
  o1.noise_std = o2.noise_std = 0.02;
  o1.seed = 1;
  o2.seed = 2;
  const auto cfg = default_turntable(3, 8);
  const Dataset d1 = synthesize_dataset(default_scene(), cfg, o1);
  const Dataset d2 = synthesize_dataset(default_scene(), cfg, o2);
  EXPECT_FALSE(d1.views[0] == d2.views[0]);
}
