#include "hsnerf/objective.hpp"

#include <cmath>

#include "hsnerf/parallel.hpp"

namespace hsnerf {

namespace {

struct ChunkTotals {
  double hsi = 0, ang = 0, dist = 0, ori = 0, pn = 0;
};

template <typename T>
ChunkTotals run_chunk(const FieldEvaluator<T>& field, const RayBatch<T>& batch, std::size_t begin, std::size_t end,
                      const ObjectiveOptions& opts, std::uint64_t seed, T* grad) {
  const FieldConfig& cfg = field.config();
  const LossWeights& lw = opts.weights;
  const int nc = cfg.n_channels;
  const bool normals = cfg.predict_normals;
  const T inv_b = T(1) / static_cast<T>(batch.rays.size());
  const T bg = static_cast<T>(opts.render.background);

  std::vector<Ray> rays(batch.rays.begin() + begin, batch.rays.begin() + end);
  const std::vector<RaySamples> plan = plan_samples(field, rays, opts.render, opts.jitter, seed);
  std::size_t total = 0;
  for (const auto& rs : plan) total += rs.size();
  const auto N = static_cast<Eigen::Index>(total);

  MatX<T> pos(3, N), dir(3, N);
  Eigen::Index col = 0;
  for (const auto& rs : plan) {
    for (std::size_t i = 0; i < rs.size(); ++i) {
      pos.col(col) = (rs.ray.origin + rs.t[i] * rs.ray.direction).template cast<T>();
      dir.col(col) = rs.ray.direction.template cast<T>();
      ++col;
    }
  }
  typename FieldEvaluator<T>::Workspace ws;
  if (N > 0) field.forward(pos, &dir, {true, normals}, ws);

  MatX<T> adj_density = MatX<T>::Zero(1, N);
  MatX<T> adj_rgb = MatX<T>::Zero(nc, N);
  MatX<T> adj_grad, adj_pred;
  if (normals) {
    adj_grad.setZero(3, N);
    adj_pred.setZero(3, N);
  }

  ChunkTotals tot;
  std::vector<T> delta, trans, w, adj_w, mid, ds, nhat, g_nhat;
  std::vector<std::uint8_t> valid;
  VecX<T> color(nc), g_color(nc), target(nc);
  col = 0;
  for (std::size_t r = 0; r < rays.size(); ++r) {
    const RaySamples& rs = plan[r];
    const int S = static_cast<int>(rs.size());
    target = batch.targets.col(static_cast<Eigen::Index>(begin + r));

    delta.assign(rs.delta.begin(), rs.delta.end());
    trans.assign(S + 1, T(0));
    w.assign(S, T(0));
    if (S > 0) composite_weights<T>(S, ws.density.data() + col, delta.data(), trans.data(), w.data());
    T acc = T(0);
    color.setZero();
    for (int i = 0; i < S; ++i) {
      acc += w[i];
      color += w[i] * ws.rgb.col(col + i);
    }
    color.array() += (T(1) - acc) * bg;

    g_color.setZero();
    tot.hsi += kernel::hsi<T>(nc, color.data(), target.data(), static_cast<T>(lw.hsi) * inv_b, g_color.data());
    tot.ang += kernel::angular<T>(nc, color.data(), target.data(), static_cast<T>(lw.ang_eps),
                                  static_cast<T>(lw.ang) * inv_b, g_color.data());
    if (S == 0) continue;

    adj_w.assign(S, T(0));
    for (int i = 0; i < S; ++i) {
      adj_w[i] = g_color.dot(ws.rgb.col(col + i)) - bg * g_color.sum();
      adj_rgb.col(col + i) = w[i] * g_color;
    }

    mid.resize(S);
    ds.resize(S);
    for (int i = 0; i < S; ++i) {
      ds[i] = static_cast<T>(rs.ds[i]);
      mid[i] = static_cast<T>(rs.s[i] + 0.5 * rs.ds[i]);
    }
    tot.dist += kernel::distortion<T>(S, mid.data(), ds.data(), w.data(), static_cast<T>(lw.dist) * inv_b, adj_w.data());

    if (normals) {
      nhat.assign(3 * S, T(0));
      g_nhat.assign(3 * S, T(0));
      valid.assign(S, 0);
      std::vector<T> gnorm(S, T(0));
      for (int i = 0; i < S; ++i) {
        const auto g = ws.density_grad.col(col + i);
        const T n = g.norm();
        gnorm[i] = n;
        if (!(n >= T(1e-12)) || !std::isfinite(n)) continue;
        valid[i] = 1;
        for (int a = 0; a < 3; ++a) nhat[3 * i + a] = -g(a) / n;
      }
      const T v[3] = {static_cast<T>(rs.ray.direction.x()), static_cast<T>(rs.ray.direction.y()),
                      static_cast<T>(rs.ray.direction.z())};
      tot.ori += kernel::orientation<T>(S, nhat.data(), valid.data(), v, w.data(), static_cast<T>(lw.ori) * inv_b,
                                        adj_w.data(), g_nhat.data());
      T* g_pred = adj_pred.data() + 3 * col;
      tot.pn += kernel::predicted_normal<T>(S, nhat.data(), ws.pred_normal.data() + 3 * col, valid.data(), w.data(),
                                            static_cast<T>(lw.pn) * inv_b, adj_w.data(), g_nhat.data(), g_pred);
      // n = -g/|g|  =>  dL/dg = -(I - n n^T) dL/dn / |g|
      for (int i = 0; i < S; ++i) {
        if (!valid[i]) continue;
        const T* n = nhat.data() + 3 * i;
        const T* an = g_nhat.data() + 3 * i;
        const T proj = n[0] * an[0] + n[1] * an[1] + n[2] * an[2];
        for (int a = 0; a < 3; ++a) adj_grad(a, col + i) = -(an[a] - n[a] * proj) / gnorm[i];
      }
    }

    composite_weights_backward<T>(S, delta.data(), trans.data(), w.data(), adj_w.data(), adj_density.data() + col);
    col += S;
  }

  if (grad && N > 0) {
    typename FieldEvaluator<T>::Adjoints adj;
    adj.density = &adj_density;
    adj.rgb = &adj_rgb;
    if (normals) {
      adj.density_grad = &adj_grad;
      adj.pred_normal = &adj_pred;
    }
    field.backward(ws, adj, grad);
  }
  return tot;
}

}  // namespace

template <typename T>
LossReport evaluate_objective(const FieldParamsT<T>& params, const RayBatch<T>& batch, const ObjectiveOptions& opts,
                              std::vector<T>* grad) {
  opts.render.validate();
  opts.weights.validate();
  const std::size_t B = batch.rays.size();
  if (B == 0) throw InvalidArgument("objective: empty batch");
  if (batch.targets.rows() != params.config.n_channels || batch.targets.cols() != static_cast<Eigen::Index>(B)) {
    throw InvalidArgument("objective: target matrix must be n_channels x batch");
  }
  if (!batch.foreground.empty() && batch.foreground.size() != B) throw InvalidArgument("objective: foreground flag count");
  if (opts.chunk_rays < 1) throw InvalidArgument("objective: chunk size must be >= 1");

  FieldEvaluator<T> field(params);
  const std::size_t P = field.layout().total();
  if (grad && grad->size() != P) grad->assign(P, T(0));

  const std::size_t chunk = static_cast<std::size_t>(opts.chunk_rays);
  const std::size_t n_chunks = (B + chunk - 1) / chunk;
  std::vector<ChunkTotals> totals(n_chunks);
  std::vector<std::vector<T>> grads(grad ? n_chunks : 0);
  parallel_for(n_chunks, [&](std::size_t k) {
    T* g = nullptr;
    if (grad) {
      grads[k].assign(P, T(0));
      g = grads[k].data();
    }
    totals[k] = run_chunk<T>(field, batch, k * chunk, std::min(B, (k + 1) * chunk), opts,
                             derive_seed(opts.seed, {k}), g);
  });

  // Fixed reduction order keeps results independent of the worker count.
  LossReport rep;
  for (std::size_t k = 0; k < n_chunks; ++k) {
    rep.hsi += totals[k].hsi;
    rep.ang += totals[k].ang;
    rep.dist += totals[k].dist;
    rep.ori += totals[k].ori;
    rep.pn += totals[k].pn;
    if (grad) {
      auto& dst = *grad;
      const auto& src = grads[k];
      for (std::size_t i = 0; i < P; ++i) dst[i] += src[i];
    }
  }
  const double inv = 1.0 / static_cast<double>(B);
  rep.hsi *= inv;
  rep.ang *= inv;
  rep.dist *= inv;
  rep.ori *= inv;
  rep.pn *= inv;
  rep.total = weighted_total(rep, opts.weights);
  rep.batch_size = B;
  if (!batch.foreground.empty()) {
    std::size_t fg = 0;
    for (auto f : batch.foreground) fg += f != 0;
    rep.mask_coverage = static_cast<double>(fg) * inv;
  }
  return rep;
}

template LossReport evaluate_objective<float>(const FieldParamsT<float>&, const RayBatch<float>&,
                                              const ObjectiveOptions&, std::vector<float>*);
template LossReport evaluate_objective<double>(const FieldParamsT<double>&, const RayBatch<double>&,
                                               const ObjectiveOptions&, std::vector<double>*);

}  // namespace hsnerf
