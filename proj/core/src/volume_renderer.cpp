#include "hsnerf/volume_renderer.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "hsnerf/parallel.hpp"

namespace hsnerf {

RaySamples make_samples(const Ray& ray, double near, double far, std::vector<double> t) {
  if (!(near < far) || !std::isfinite(near) || !std::isfinite(far)) throw InvalidArgument("samples: need near < far");
  if (t.empty()) throw InvalidArgument("samples: empty t array");
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!(t[i] >= near && t[i] <= far)) throw InvalidArgument("samples: t outside [near, far]");
    if (i > 0 && !(t[i] > t[i - 1])) throw InvalidArgument("samples: t not strictly increasing");
  }
  RaySamples rs;
  rs.ray = ray;
  rs.near = near;
  rs.far = far;
  const std::size_t S = t.size();
  rs.delta.resize(S);
  rs.s.resize(S);
  rs.ds.resize(S);
  const double len = far - near;
  for (std::size_t i = 0; i < S; ++i) {
    rs.delta[i] = (i + 1 < S ? t[i + 1] : far) - t[i];
    rs.s[i] = (t[i] - near) / len;
    rs.ds[i] = rs.delta[i] / len;
  }
  rs.t = std::move(t);
  return rs;
}

RaySamples sample_stratified(const Ray& ray, double near, double far, int n, bool jitter, std::uint64_t seed) {
  if (!(near < far)) throw InvalidArgument("sample_stratified: need near < far");
  if (n < 2) throw InvalidArgument("sample_stratified: need at least two samples");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const double step = (far - near) / n;
  std::vector<double> t(n);
  for (int i = 0; i < n; ++i) {
    const double u = jitter ? uni(rng) : 0.5;
    t[i] = near + (i + u) * step;
  }
  // A draw of exactly 0 in stratum i+1 could tie with stratum i's upper end.
  for (int i = 1; i < n; ++i)
    if (!(t[i] > t[i - 1])) t[i] = std::nextafter(t[i - 1], far);
  return make_samples(ray, near, far, std::move(t));
}

RaySamples sample_importance(const RaySamples& coarse, std::span<const double> weights, int n, bool jitter,
                             std::uint64_t seed) {
  const std::size_t S = coarse.size();
  if (weights.size() != S) throw InvalidArgument("sample_importance: weight count differs from sample count");
  if (n < 1) throw InvalidArgument("sample_importance: need at least one sample");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw InvalidArgument("sample_importance: weights must be finite and >= 0");
    total += w;
  }

  std::vector<double> fine;
  fine.reserve(n);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  if (total <= 0.0) {
    const RaySamples strat = sample_stratified(coarse.ray, coarse.near, coarse.far, std::max(n, 2), jitter, seed);
    fine.assign(strat.t.begin(), strat.t.begin() + n);
  } else {
    std::vector<double> edges(S + 1);
    edges[0] = coarse.near;
    for (std::size_t i = 1; i < S; ++i) edges[i] = 0.5 * (coarse.t[i - 1] + coarse.t[i]);
    edges[S] = coarse.far;
    std::vector<double> cdf(S + 1, 0.0);
    for (std::size_t i = 0; i < S; ++i) cdf[i + 1] = cdf[i] + std::max(weights[i], 1e-5);
    for (double& c : cdf) c /= cdf[S];
    std::size_t k = 0;
    for (int j = 0; j < n; ++j) {
      const double u = (j + (jitter ? uni(rng) : 0.5)) / n;
      while (k + 1 < S && cdf[k + 1] <= u) ++k;
      const double span = cdf[k + 1] - cdf[k];
      const double f = span > 0.0 ? std::clamp((u - cdf[k]) / span, 0.0, 1.0) : 0.5;
      fine.push_back(edges[k] + f * (edges[k + 1] - edges[k]));
    }
  }

  std::vector<double> t(coarse.t);
  t.insert(t.end(), fine.begin(), fine.end());
  std::sort(t.begin(), t.end());
  for (std::size_t i = 1; i < t.size(); ++i)
    if (!(t[i] > t[i - 1])) t[i] = std::nextafter(t[i - 1], coarse.far + 1.0);
  // Nudging can push the tail past far only when samples pile up there.
  while (t.back() > coarse.far) t.pop_back();
  return make_samples(coarse.ray, coarse.near, coarse.far, std::move(t));
}

template <typename T>
void composite_weights(int n, const T* sigma, const T* delta, T* trans, T* weights) {
  T cum = T(0);
  trans[0] = T(1);
  for (int i = 0; i < n; ++i) {
    const T tau = sigma[i] * delta[i];
    weights[i] = trans[i] * -std::expm1(-tau);
    cum += tau;
    trans[i + 1] = std::exp(-cum);
  }
}

template <typename T>
void composite_weights_backward(int n, const T* delta, const T* trans, const T* weights, const T* adj_w,
                                T* adj_sigma) {
  // dL/dtau_i = T_{i+1} g_i - sum_{k>i} w_k g_k
  T suffix = T(0);
  for (int i = n - 1; i >= 0; --i) {
    const T g = adj_w[i];
    adj_sigma[i] += (trans[i + 1] * g - suffix) * delta[i];
    suffix += weights[i] * g;
  }
}

template void composite_weights<float>(int, const float*, const float*, float*, float*);
template void composite_weights<double>(int, const double*, const double*, double*, double*);
template void composite_weights_backward<float>(int, const float*, const float*, const float*, const float*, float*);
template void composite_weights_backward<double>(int, const double*, const double*, const double*, const double*,
                                                 double*);

RenderOutput composite(const RaySamples& samples, std::span<const double> densities,
                       const std::vector<std::vector<double>>& radiances, std::span<const double> background) {
  const std::size_t S = samples.size();
  if (densities.size() != S || radiances.size() != S) throw InvalidArgument("composite: sample count mismatch");
  const std::size_t nc = background.size();
  for (std::size_t i = 0; i < S; ++i) {
    if (!(densities[i] >= 0.0)) throw InvalidArgument("composite: negative or NaN density");
    if (radiances[i].size() != nc) throw InvalidArgument("composite: radiance length differs from background");
  }
  RenderOutput out;
  out.weights.resize(S);
  out.transmittance.resize(S + 1);
  composite_weights<double>(static_cast<int>(S), densities.data(), samples.delta.data(), out.transmittance.data(),
                            out.weights.data());
  out.radiance.assign(nc, 0.0);
  double depth = 0.0;
  for (std::size_t i = 0; i < S; ++i) {
    out.accumulation += out.weights[i];
    depth += out.weights[i] * samples.t[i];
    for (std::size_t c = 0; c < nc; ++c) out.radiance[c] += out.weights[i] * radiances[i][c];
  }
  for (std::size_t c = 0; c < nc; ++c) out.radiance[c] += (1.0 - out.accumulation) * background[c];
  out.depth = depth / std::max(out.accumulation, 1e-8);
  out.densities.assign(densities.begin(), densities.end());
  out.radiances = radiances;
  return out;
}

void RenderConfig::validate() const {
  if (coarse_samples < 2) throw InvalidArgument("render: need at least two coarse samples");
  if (fine_samples < 0) throw InvalidArgument("render: negative fine sample count");
  if (!(bounds_pad >= 0.0)) throw InvalidArgument("render: negative bounds padding");
  if (!std::isfinite(background)) throw InvalidArgument("render: non-finite background");
}

template <typename T>
std::vector<RaySamples> plan_samples(const FieldEvaluator<T>& field, const std::vector<Ray>& rays,
                                     const RenderConfig& cfg, bool jitter, std::uint64_t seed) {
  std::vector<RaySamples> out(rays.size());
  std::size_t total = 0;
  for (std::size_t r = 0; r < rays.size(); ++r) {
    const auto b = ray_bounds(rays[r], field.config().bounds, cfg.bounds_pad);
    if (!b) continue;
    out[r] = sample_stratified(rays[r], b->first, b->second, cfg.coarse_samples, jitter, derive_seed(seed, {r, 0}));
    total += out[r].size();
  }
  if (cfg.fine_samples == 0 || total == 0) return out;

  MatX<T> pos(3, static_cast<Eigen::Index>(total));
  Eigen::Index col = 0;
  for (const auto& rs : out) {
    for (std::size_t i = 0; i < rs.size(); ++i)
      pos.col(col++) = (rs.ray.origin + rs.t[i] * rs.ray.direction).template cast<T>();
  }
  typename FieldEvaluator<T>::Workspace ws;
  field.forward(pos, nullptr, {false, false}, ws);

  col = 0;
  std::vector<T> delta, trans, w;
  std::vector<double> wd;
  for (std::size_t r = 0; r < rays.size(); ++r) {
    RaySamples& rs = out[r];
    const int S = static_cast<int>(rs.size());
    if (S == 0) continue;
    delta.assign(rs.delta.begin(), rs.delta.end());
    trans.resize(S + 1);
    w.resize(S);
    composite_weights<T>(S, ws.density.data() + col, delta.data(), trans.data(), w.data());
    wd.assign(w.begin(), w.end());
    rs = sample_importance(rs, wd, cfg.fine_samples, jitter, derive_seed(seed, {r, 1}));
    col += S;
  }
  return out;
}

template std::vector<RaySamples> plan_samples<float>(const FieldEvaluator<float>&, const std::vector<Ray>&,
                                                     const RenderConfig&, bool, std::uint64_t);
template std::vector<RaySamples> plan_samples<double>(const FieldEvaluator<double>&, const std::vector<Ray>&,
                                                      const RenderConfig&, bool, std::uint64_t);

template <typename T>
MatX<T> render_rays(const FieldParamsT<T>& params, const std::vector<Ray>& rays, const RenderConfig& cfg,
                    std::vector<T>* accumulation, std::vector<T>* depth) {
  cfg.validate();
  FieldEvaluator<T> field(params);
  const int nc = params.config.n_channels;
  const auto R = static_cast<Eigen::Index>(rays.size());
  MatX<T> color = MatX<T>::Constant(nc, R, static_cast<T>(cfg.background));
  if (accumulation) accumulation->assign(rays.size(), T(0));
  if (depth) depth->assign(rays.size(), T(0));

  const std::vector<RaySamples> plan = plan_samples(field, rays, cfg, false, 0);
  std::size_t total = 0;
  for (const auto& rs : plan) total += rs.size();
  if (total == 0) return color;

  MatX<T> pos(3, static_cast<Eigen::Index>(total)), dir(3, static_cast<Eigen::Index>(total));
  Eigen::Index col = 0;
  for (const auto& rs : plan) {
    for (std::size_t i = 0; i < rs.size(); ++i) {
      pos.col(col) = (rs.ray.origin + rs.t[i] * rs.ray.direction).template cast<T>();
      dir.col(col) = rs.ray.direction.template cast<T>();
      ++col;
    }
  }
  typename FieldEvaluator<T>::Workspace ws;
  field.forward(pos, &dir, {true, false}, ws);

  col = 0;
  std::vector<T> delta, trans, w;
  for (Eigen::Index r = 0; r < R; ++r) {
    const RaySamples& rs = plan[r];
    const int S = static_cast<int>(rs.size());
    if (S == 0) continue;
    delta.assign(rs.delta.begin(), rs.delta.end());
    trans.resize(S + 1);
    w.resize(S);
    composite_weights<T>(S, ws.density.data() + col, delta.data(), trans.data(), w.data());
    T acc = T(0), d = T(0);
    VecX<T> c = VecX<T>::Zero(nc);
    for (int i = 0; i < S; ++i) {
      acc += w[i];
      d += w[i] * static_cast<T>(rs.t[i]);
      c += w[i] * ws.rgb.col(col + i);
    }
    color.col(r) = c.array() + (T(1) - acc) * static_cast<T>(cfg.background);
    if (accumulation) (*accumulation)[r] = acc;
    if (depth) (*depth)[r] = d / std::max(acc, T(1e-8));
    col += S;
  }
  return color;
}

template MatX<float> render_rays<float>(const FieldParamsT<float>&, const std::vector<Ray>&, const RenderConfig&,
                                        std::vector<float>*, std::vector<float>*);
template MatX<double> render_rays<double>(const FieldParamsT<double>&, const std::vector<Ray>&, const RenderConfig&,
                                          std::vector<double>*, std::vector<double>*);

RenderedView render_view(const FieldParams& params, const CameraModel& cam, const Pose& pose,
                         const std::vector<double>& wavelengths, const RenderConfig& cfg, int chunk) {
  cam.validate();
  cfg.validate();
  if (chunk < 1) throw InvalidArgument("render_view: chunk must be >= 1");
  if (static_cast<int>(wavelengths.size()) != params.config.n_channels) {
    throw InvalidArgument("render_view: wavelength count differs from the field's channel count");
  }
  const std::size_t P = static_cast<std::size_t>(cam.width) * cam.height;
  const int nc = params.config.n_channels;
  RenderedView view{HyperCube(cam.height, cam.width, wavelengths, CubeKind::Calibrated), std::vector<float>(P),
                    std::vector<float>(P)};
  auto data = view.cube.mutable_data();
  const std::size_t n_chunks = (P + chunk - 1) / chunk;
  parallel_for(n_chunks, [&](std::size_t k) {
    const std::size_t begin = k * chunk;
    const std::size_t end = std::min(P, begin + chunk);
    std::vector<Ray> rays;
    rays.reserve(end - begin);
    for (std::size_t p = begin; p < end; ++p) {
      const int x = static_cast<int>(p % cam.width);
      const int y = static_cast<int>(p / cam.width);
      rays.push_back(pixel_ray(cam, pose, x + 0.5, y + 0.5));
    }
    std::vector<float> acc, depth;
    const MatX<float> color = render_rays<float>(params, rays, cfg, &acc, &depth);
    for (std::size_t p = begin; p < end; ++p) {
      const std::size_t r = p - begin;
      for (int c = 0; c < nc; ++c) data[p * nc + c] = std::clamp(color(c, static_cast<Eigen::Index>(r)), 0.0f, 1.0f);
      view.accumulation[p] = acc[r];
      view.depth[p] = depth[r];
    }
  });
  return view;
}

}  // namespace hsnerf
