#include <benchmark/benchmark.h>

#include <random>

#include "hsnerf/objective.hpp"
#include "hsnerf/point_cloud.hpp"
#include "hsnerf/scene_synth.hpp"
#include "hsnerf/spatial_eval.hpp"

using namespace hsnerf;

namespace {

FieldConfig bench_field() {
  FieldConfig fc;
  fc.n_channels = 8;
  fc.activation = Activation::Softplus;
  fc.predict_normals = true;
  fc.bounds = Aabb{Vec3::Constant(-0.7), Vec3::Constant(0.7)};
  return fc;
}

std::vector<Ray> random_rays(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  std::vector<Ray> rays(n);
  for (auto& r : rays) {
    Vec3 d(g(rng), g(rng), g(rng));
    d.normalize();
    r.origin = -2.0 * d;
    r.direction = d;
  }
  return rays;
}

void BM_ObjectiveWithGradient(benchmark::State& state) {
  const auto params = init_params<float>(bench_field(), 1);
  RayBatch<float> batch;
  batch.rays = random_rays(static_cast<std::size_t>(state.range(0)), 2);
  batch.targets = MatX<float>::Constant(8, state.range(0), 0.5f);
  ObjectiveOptions opts;
  std::vector<float> grad(params.theta.size());
  for (auto _ : state) {
    std::fill(grad.begin(), grad.end(), 0.0f);
    benchmark::DoNotOptimize(evaluate_objective<float>(params, batch, opts, &grad));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ObjectiveWithGradient)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_RenderRays(benchmark::State& state) {
  const auto params = init_params<float>(bench_field(), 1);
  const auto rays = random_rays(static_cast<std::size_t>(state.range(0)), 3);
  const RenderConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(render_rays<float>(params, rays, cfg));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_RenderRays)->Arg(1024)->Unit(benchmark::kMillisecond);

void BM_GridNearest(benchmark::State& state) {
  const auto pts = sample_surface(default_scene(), static_cast<std::size_t>(state.range(0)));
  const GridIndex index(pts);
  const auto queries = sample_surface(default_scene(), 4096);
  for (auto _ : state) {
    for (const auto& q : queries) benchmark::DoNotOptimize(index.nearest(q));
  }
  state.SetItemsProcessed(state.iterations() * 4096);
}
BENCHMARK(BM_GridNearest)->Arg(20000)->Arg(200000);

void BM_PrecisionRecall(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto sc = sample_surface(default_scene(), n);
  const auto gt = sample_surface(default_scene(), n + 7);
  for (auto _ : state) benchmark::DoNotOptimize(precision_recall(sc, gt, 0.01));
}
BENCHMARK(BM_PrecisionRecall)->Arg(50000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
