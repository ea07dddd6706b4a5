#include <cmath>
#include <random>

#include "hsnerf/radiance_field.hpp"
#include "test_util.hpp"

using namespace hsnerf;

namespace {

FieldConfig small_config(Activation act = Activation::Softplus, bool normals = false) {
  FieldConfig cfg;
  cfg.n_channels = 5;
  cfg.pos_frequencies = 3;
  cfg.dir_frequencies = 2;
  cfg.trunk_layers = 2;
  cfg.trunk_width = 12;
  cfg.radiance_layers = 1;
  cfg.radiance_width = 10;
  cfg.activation = act;
  cfg.predict_normals = normals;
  cfg.bounds = Aabb{Vec3::Constant(-1.0), Vec3::Constant(1.0)};
  return cfg;
}

struct Batch {
  std::vector<Vec3> points, dirs;
};

Batch random_batch(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.8, 0.8);
  std::normal_distribution<double> g;
  Batch b;
  for (int i = 0; i < n; ++i) {
    b.points.emplace_back(u(rng), u(rng), u(rng));
    b.dirs.push_back(Vec3(g(rng), g(rng), g(rng)).normalized());
  }
  return b;
}

}  // namespace

TEST(Encode, ZeroInputAndLength) {
  const auto e = encode(Vec3::Zero(), 1);
  ASSERT_EQ(e.size(), 9u);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(e[i], 0.0);
  for (int i = 3; i < 6; ++i) EXPECT_EQ(e[i], 0.0);  // sin
  for (int i = 6; i < 9; ++i) EXPECT_EQ(e[i], 1.0);  // cos
  EXPECT_EQ(encode(Vec3(0.1, 0.2, 0.3), 6).size(), 39u);
}

TEST(Encode, Parity) {
  const Vec3 x(0.3, -0.7, 0.12);
  const auto p = encode(x, 4);
  const auto m = encode(-x, 4);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(m[i], -p[i]);
  for (int k = 0; k < 4; ++k) {
    const int base = 3 + 6 * k;
    for (int a = 0; a < 3; ++a) {
      EXPECT_NEAR(m[base + a], -p[base + a], 1e-15);
      EXPECT_NEAR(m[base + 3 + a], p[base + 3 + a], 1e-15);
    }
  }
}

TEST(FieldConfig, JsonRoundTripAndValidation) {
  const FieldConfig cfg = small_config(Activation::ReLU, true);
  EXPECT_EQ(field_config_from_json(field_config_to_json(cfg)), cfg);
  FieldConfig bad = cfg;
  bad.trunk_layers = 0;
  EXPECT_THROW(bad.validate(), InvalidArgument);
  bad = cfg;
  bad.n_channels = 0;
  EXPECT_THROW(bad.validate(), InvalidArgument);
}

TEST(Query, DensityIgnoresDirection) {
  const auto params = init_params<float>(small_config(Activation::ReLU), 7);
  const auto b = random_batch(20, 3);
  for (int i = 0; i < 20; ++i) {
    const auto a = query(params, b.points[i], b.dirs[i]);
    const auto c = query(params, b.points[i], b.dirs[(i + 1) % 20]);
    EXPECT_EQ(a.density, c.density);
    EXPECT_GE(a.density, 0.0);
    ASSERT_EQ(a.radiance.size(), 5u);
    for (double r : a.radiance) {
      EXPECT_GT(r, 0.0);
      EXPECT_LT(r, 1.0);
    }
  }
}

TEST(Query, ZeroDensityLayerGivesSoftplusZero) {
  const FieldConfig cfg = small_config();
  auto params = init_params<double>(cfg, 1);
  const ParamLayout layout(cfg);
  for (int idx : {layout.density_weight, layout.density_bias}) {
    const auto& blk = layout.blocks()[idx];
    std::fill_n(params.theta.begin() + static_cast<std::ptrdiff_t>(blk.offset), blk.size(), 0.0);
  }
  const auto b = random_batch(6, 9);
  for (int i = 0; i < 6; ++i) EXPECT_NEAR(query(params, b.points[i], b.dirs[i]).density, std::log(2.0), 1e-12);
}

TEST(Query, RejectsNonUnitDirection) {
  const auto params = init_params<float>(small_config(), 1);
  EXPECT_THROW(query(params, Vec3::Zero(), Vec3(0.0, 0.0, 1.01)), InvalidArgument);
  EXPECT_NO_THROW(query(params, Vec3::Zero(), Vec3(0.0, 0.0, 1.0 + 5e-7)));
}

TEST(Query, PredictedNormalIsUnit) {
  const auto params = init_params<double>(small_config(Activation::ReLU, true), 4);
  const auto b = random_batch(10, 4);
  for (int i = 0; i < 10; ++i) EXPECT_NEAR(query(params, b.points[i], b.dirs[i]).predicted_normal.norm(), 1.0, 1e-12);
}

TEST(Query, DeterministicForSeed) {
  const auto a = init_params<float>(small_config(), 11);
  const auto b = init_params<float>(small_config(), 11);
  const auto c = init_params<float>(small_config(), 12);
  EXPECT_EQ(a.theta, b.theta);
  EXPECT_NE(a.theta, c.theta);
  EXPECT_EQ(a.theta.size(), ParamLayout(small_config()).total());
}

TEST(Gradients, ParametersMatchFiniteDifferences) {
  const FieldConfig cfg = small_config(Activation::Softplus, true);
  auto params = init_params<double>(cfg, 5);
  const auto b = random_batch(8, 21);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  MatX<double> adj_d(1, 8), adj_c(cfg.n_channels, 8);
  for (int j = 0; j < 8; ++j) {
    adj_d(0, j) = u(rng);
    for (int c = 0; c < cfg.n_channels; ++c) adj_c(c, j) = u(rng);
  }
  auto loss = [&](const FieldParamsT<double>& p) {
    double s = 0.0;
    for (int j = 0; j < 8; ++j) {
      const auto o = query(p, b.points[j], b.dirs[j]);
      s += adj_d(0, j) * o.density;
      for (int c = 0; c < cfg.n_channels; ++c) s += adj_c(c, j) * o.radiance[c];
    }
    return s;
  };
  const auto res = query_batch_with_grad(params, b.points, b.dirs, adj_d, adj_c);
  // Normal head parameters do not feed density or radiance.
  const ParamLayout layout(cfg);
  const auto& nw = layout.blocks()[layout.normal_weight];
  const auto& nb = layout.blocks()[layout.normal_bias];
  const double h = 1e-4;
  int checked = 0;
  for (std::size_t i = 0; i < params.theta.size(); ++i) {
    const bool normal_head =
        (i >= nw.offset && i < nw.offset + nw.size()) || (i >= nb.offset && i < nb.offset + nb.size());
    if (normal_head) {
      EXPECT_EQ(res.param_grad[i], 0.0);
      continue;
    }
    const double keep = params.theta[i];
    params.theta[i] = keep + h;
    const double lp = loss(params);
    params.theta[i] = keep - h;
    const double lm = loss(params);
    params.theta[i] = keep;
    const double fd = (lp - lm) / (2 * h);
    EXPECT_LT(std::abs(fd - res.param_grad[i]), 1e-4 * std::max(std::abs(fd), 1e-3)) << "param " << i;
    ++checked;
  }
  EXPECT_GT(checked, 100);
}

TEST(Gradients, DensityGradientMatchesFiniteDifferences) {
  for (auto act : {Activation::Softplus, Activation::ReLU}) {
    const auto params = init_params<double>(small_config(act), 8);
    const auto b = random_batch(8, 5);
    const double h = 1e-6;
    for (int j = 0; j < 8; ++j) {
      const auto o = query(params, b.points[j], b.dirs[j]);
      for (int a = 0; a < 3; ++a) {
        Vec3 xp = b.points[j], xm = b.points[j];
        xp[a] += h;
        xm[a] -= h;
        const double fd = (query(params, xp, b.dirs[j]).density - query(params, xm, b.dirs[j]).density) / (2 * h);
        EXPECT_LT(std::abs(fd - o.density_gradient[a]), 1e-4 * std::max(std::abs(fd), 1e-4));
      }
    }
  }
}

TEST(Gradients, ZeroAdjointsGiveZeroGradient) {
  const FieldConfig cfg = small_config(Activation::ReLU);
  const auto params = init_params<float>(cfg, 5);
  const auto b = random_batch(8, 1);
  const MatX<float> zd = MatX<float>::Zero(1, 8), zr = MatX<float>::Zero(cfg.n_channels, 8);
  const MatX<float> short_d = MatX<float>::Zero(1, 7);
  const auto res = query_batch_with_grad(params, b.points, b.dirs, zd, zr);
  for (double g : res.param_grad) EXPECT_EQ(g, 0.0);
  EXPECT_THROW(query_batch_with_grad(params, b.points, b.dirs, short_d, zr), InvalidArgument);
}

TEST(DerivedNormal, Cases) {
  const auto n = derived_normal(Vec3(0.0, 0.0, -5.0));
  EXPECT_FALSE(n.degenerate);
  EXPECT_EQ(n.normal, Vec3(0.0, 0.0, 1.0));
  EXPECT_TRUE(derived_normal(Vec3(1e-13, 0.0, 0.0)).degenerate);
  const Vec3 g(0.3, -1.2, 2.5);
  const auto a = derived_normal(g);
  const auto b = derived_normal(17.0 * g);
  EXPECT_NEAR(a.normal.norm(), 1.0, 1e-15);
  EXPECT_LT((a.normal - b.normal).norm(), 1e-15);
}

TEST(Checkpoint, RoundTrip) {
  const auto dir = test::temp_dir();
  Checkpoint c;
  c.params = init_params<float>(small_config(Activation::ReLU, true), 3);
  c.step = 1234;
  c.stage = Stage::Finetune;
  c.adam_m.assign(c.params.theta.size(), 0.25f);
  c.adam_v.assign(c.params.theta.size(), 0.5f);
  save_checkpoint(dir / "x.ckpt", c);
  const Checkpoint r = load_checkpoint(dir / "x.ckpt");
  EXPECT_EQ(r.params.config, c.params.config);
  EXPECT_EQ(r.params.theta, c.params.theta);
  EXPECT_EQ(r.params.seed, c.params.seed);
  EXPECT_EQ(r.step, 1234);
  EXPECT_EQ(r.stage, Stage::Finetune);
  EXPECT_EQ(r.adam_m, c.adam_m);
  EXPECT_EQ(r.adam_v, c.adam_v);

  std::filesystem::resize_file(dir / "x.ckpt", std::filesystem::file_size(dir / "x.ckpt") - 8);
  EXPECT_THROW(load_checkpoint(dir / "x.ckpt"), IoError);
  EXPECT_THROW(load_checkpoint(dir / "missing.ckpt"), IoError);
}
