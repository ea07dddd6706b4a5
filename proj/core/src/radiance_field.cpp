#include "hsnerf/radiance_field.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <random>

#include "json.hpp"

namespace hsnerf {

using json = nlohmann::json;

// ---------------------------------------------------------------- config

void FieldConfig::validate() const {
  if (n_channels < 1) throw InvalidArgument("FieldConfig: n_channels must be >= 1");
  if (pos_frequencies < 1 || dir_frequencies < 1) throw InvalidArgument("FieldConfig: frequency counts must be >= 1");
  if (trunk_layers < 1 || trunk_width < 1) throw InvalidArgument("FieldConfig: trunk must have >= 1 layer of width >= 1");
  if (radiance_layers < 1 || radiance_width < 1) {
    throw InvalidArgument("FieldConfig: radiance branch must have >= 1 layer of width >= 1");
  }
  if (!((bounds.max - bounds.min).array() > 0.0).all()) throw InvalidArgument("FieldConfig: empty bounds");
}

bool FieldConfig::operator==(const FieldConfig& o) const {
  return n_channels == o.n_channels && pos_frequencies == o.pos_frequencies &&
         dir_frequencies == o.dir_frequencies && trunk_layers == o.trunk_layers &&
         trunk_width == o.trunk_width && radiance_layers == o.radiance_layers &&
         radiance_width == o.radiance_width && predict_normals == o.predict_normals &&
         activation == o.activation && bounds.min == o.bounds.min && bounds.max == o.bounds.max;
}

std::string to_string(Activation a) { return a == Activation::ReLU ? "relu" : "softplus"; }

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::ReLU;
  if (s == "softplus") return Activation::Softplus;
  throw InvalidArgument("unknown activation: " + s);
}

namespace {

json config_json(const FieldConfig& c) {
  return json{{"n_channels", c.n_channels},
              {"pos_frequencies", c.pos_frequencies},
              {"dir_frequencies", c.dir_frequencies},
              {"trunk_layers", c.trunk_layers},
              {"trunk_width", c.trunk_width},
              {"radiance_layers", c.radiance_layers},
              {"radiance_width", c.radiance_width},
              {"predict_normals", c.predict_normals},
              {"activation", to_string(c.activation)},
              {"bounds_min", {c.bounds.min.x(), c.bounds.min.y(), c.bounds.min.z()}},
              {"bounds_max", {c.bounds.max.x(), c.bounds.max.y(), c.bounds.max.z()}}};
}

FieldConfig config_from(const json& j) {
  FieldConfig c;
  c.n_channels = j.at("n_channels").get<int>();
  c.pos_frequencies = j.at("pos_frequencies").get<int>();
  c.dir_frequencies = j.at("dir_frequencies").get<int>();
  c.trunk_layers = j.at("trunk_layers").get<int>();
  c.trunk_width = j.at("trunk_width").get<int>();
  c.radiance_layers = j.at("radiance_layers").get<int>();
  c.radiance_width = j.at("radiance_width").get<int>();
  c.predict_normals = j.at("predict_normals").get<bool>();
  c.activation = activation_from_string(j.at("activation").get<std::string>());
  const auto lo = j.at("bounds_min").get<std::vector<double>>();
  const auto hi = j.at("bounds_max").get<std::vector<double>>();
  if (lo.size() != 3 || hi.size() != 3) throw InvalidArgument("bounds must have three components");
  c.bounds.min = Vec3(lo[0], lo[1], lo[2]);
  c.bounds.max = Vec3(hi[0], hi[1], hi[2]);
  c.validate();
  return c;
}

}  // namespace

std::string field_config_to_json(const FieldConfig& cfg) { return config_json(cfg).dump(); }

FieldConfig field_config_from_json(const std::string& text) {
  try {
    return config_from(json::parse(text));
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("bad field config: ") + e.what());
  }
}

// ---------------------------------------------------------------- encoding

std::vector<double> encode(const Vec3& x, int frequencies) {
  if (frequencies < 0) throw InvalidArgument("encode: negative frequency count");
  std::vector<double> out(3 + 6 * frequencies);
  for (int a = 0; a < 3; ++a) out[a] = x[a];
  for (int k = 0; k < frequencies; ++k) {
    const double w = std::ldexp(std::numbers::pi, k);
    for (int a = 0; a < 3; ++a) {
      out[3 + 6 * k + a] = std::sin(w * x[a]);
      out[3 + 6 * k + 3 + a] = std::cos(w * x[a]);
    }
  }
  return out;
}

namespace {

// Columns of `in` (3 x N) are encoded into `out` ((3+6F) x N). When tangent
// is non-null it receives d(out)/d(world x_a) for a = 0..2, stacked
// horizontally, given the per-axis scale d(in)/d(world) = inv_scale.
template <typename T>
void encode_columns(const MatX<T>& in, int F, const Eigen::Matrix<T, 3, 1>& inv_scale, MatX<T>& out,
                    MatX<T>* tangent) {
  const Eigen::Index N = in.cols();
  out.resize(3 + 6 * F, N);
  if (tangent) tangent->setZero(3 + 6 * F, 3 * N);
  for (Eigen::Index j = 0; j < N; ++j) {
    for (int a = 0; a < 3; ++a) {
      const T v = in(a, j);
      out(a, j) = v;
      if (tangent) (*tangent)(a, a * N + j) = inv_scale[a];
      // k = 0 directly, higher octaves by angle doubling.
      T s = std::sin(std::numbers::pi_v<T> * v);
      T c = std::cos(std::numbers::pi_v<T> * v);
      T freq = std::numbers::pi_v<T>;
      for (int k = 0; k < F; ++k) {
        if (k > 0) {
          const T s2 = T(2) * s * c;
          const T c2 = T(1) - T(2) * s * s;
          s = s2;
          c = c2;
          freq *= T(2);
        }
        out(3 + 6 * k + a, j) = s;
        out(3 + 6 * k + 3 + a, j) = c;
        if (tangent) {
          (*tangent)(3 + 6 * k + a, a * N + j) = freq * c * inv_scale[a];
          (*tangent)(3 + 6 * k + 3 + a, a * N + j) = -freq * s * inv_scale[a];
        }
      }
    }
  }
}

template <typename T>
void softplus(const MatX<T>& z, MatX<T>& out) {
  out = z.array().max(T(0)) + (-z.array().abs()).exp().log1p();
}

template <typename T>
void sigmoid(const MatX<T>& z, MatX<T>& out) {
  out = (T(1) + (-z.array()).exp()).inverse();
}

template <typename T>
void activate(Activation act, const MatX<T>& z, MatX<T>& out) {
  if (act == Activation::ReLU) {
    out = z.cwiseMax(T(0));
  } else {
    softplus(z, out);
  }
}

// g'(z)
template <typename T>
void activation_slope(Activation act, const MatX<T>& z, MatX<T>& out) {
  if (act == Activation::ReLU) {
    out = (z.array() > T(0)).template cast<T>();
  } else {
    sigmoid(z, out);
  }
}

// Multiplies each of the three N-column blocks of `m` elementwise by `d`.
template <typename T>
void scale_blocks(MatX<T>& m, const MatX<T>& d) {
  const Eigen::Index N = d.cols();
  for (int a = 0; a < 3; ++a) m.middleCols(a * N, N).array() *= d.array();
}

}  // namespace

// ---------------------------------------------------------------- layout

ParamLayout::ParamLayout(const FieldConfig& cfg) {
  cfg.validate();
  int in = cfg.pos_encoding_size();
  for (int l = 0; l < cfg.trunk_layers; ++l) {
    trunk_weights.push_back(add("trunk." + std::to_string(l) + ".weight", cfg.trunk_width, in));
    trunk_biases.push_back(add("trunk." + std::to_string(l) + ".bias", cfg.trunk_width, 1));
    in = cfg.trunk_width;
  }
  density_weight = add("density.weight", 1, cfg.trunk_width);
  density_bias = add("density.bias", 1, 1);
  in = cfg.trunk_width + cfg.dir_encoding_size();
  for (int l = 0; l < cfg.radiance_layers; ++l) {
    radiance_weights.push_back(add("radiance." + std::to_string(l) + ".weight", cfg.radiance_width, in));
    radiance_biases.push_back(add("radiance." + std::to_string(l) + ".bias", cfg.radiance_width, 1));
    in = cfg.radiance_width;
  }
  radiance_weights.push_back(add("radiance.out.weight", cfg.n_channels, in));
  radiance_biases.push_back(add("radiance.out.bias", cfg.n_channels, 1));
  if (cfg.predict_normals) {
    normal_weight = add("normal.weight", 3, cfg.trunk_width);
    normal_bias = add("normal.bias", 3, 1);
  }
}

int ParamLayout::add(const std::string& name, int rows, int cols) {
  blocks_.push_back(ParamBlock{name, total_, rows, cols});
  total_ += static_cast<std::size_t>(rows) * cols;
  return static_cast<int>(blocks_.size()) - 1;
}

const ParamBlock& ParamLayout::block(const std::string& name) const {
  for (const auto& b : blocks_)
    if (b.name == name) return b;
  throw InvalidArgument("no parameter block named " + name);
}

template <typename T>
FieldParamsT<T> init_params(const FieldConfig& cfg, std::uint64_t seed) {
  const ParamLayout layout(cfg);
  FieldParamsT<T> p;
  p.config = cfg;
  p.seed = seed;
  p.theta.assign(layout.total(), T(0));
  std::mt19937_64 rng(seed);
  for (const auto& b : layout.blocks()) {
    if (b.cols == 1 && b.name.ends_with(".bias")) continue;
    const double bound = std::sqrt(6.0 / b.cols);
    for (std::size_t i = 0; i < b.size(); ++i) {
      const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;  // [0,1)
      p.theta[b.offset + i] = static_cast<T>((2.0 * u - 1.0) * bound);
    }
  }
  return p;
}

DerivedNormal derived_normal(const Vec3& g) {
  DerivedNormal out;
  const double n = g.norm();
  if (!std::isfinite(n) || n < 1e-12) return out;
  out.normal = -g / n;
  out.degenerate = false;
  return out;
}

// ---------------------------------------------------------------- evaluator

template <typename T>
FieldEvaluator<T>::FieldEvaluator(const FieldParamsT<T>& params)
    : params_(params), layout_(params.config) {
  if (params.theta.size() != layout_.total()) {
    throw InvalidArgument("FieldEvaluator: parameter count does not match configuration");
  }
  theta_ = Eigen::Map<const VecX<T>>(params.theta.data(), static_cast<Eigen::Index>(params.theta.size()));
}

template <typename T>
Eigen::Map<const MatX<T>> FieldEvaluator<T>::weight(int idx) const {
  const auto& b = layout_.blocks()[idx];
  return Eigen::Map<const MatX<T>>(block_ptr(idx), b.rows, b.cols);
}

template <typename T>
Eigen::Map<const VecX<T>> FieldEvaluator<T>::bias(int idx) const {
  const auto& b = layout_.blocks()[idx];
  return Eigen::Map<const VecX<T>>(block_ptr(idx), b.rows);
}

template <typename T>
void FieldEvaluator<T>::forward(const MatX<T>& positions, const MatX<T>* dirs, Flags flags,
                                Workspace& ws) const {
  const FieldConfig& cfg = params_.config;
  const Eigen::Index N = positions.cols();
  if (positions.rows() != 3) throw InvalidArgument("forward: positions must be 3 x N");
  if (flags.radiance && (!dirs || dirs->rows() != 3 || dirs->cols() != N)) {
    throw InvalidArgument("forward: directions must be 3 x N");
  }
  ws.flags = flags;
  ws.n = N;

  const Vec3 center = cfg.bounds.center();
  const Vec3 half = cfg.bounds.half_extent();
  const Eigen::Matrix<T, 3, 1> inv_scale = half.cwiseInverse().template cast<T>();
  MatX<T> normalized = (positions.colwise() - center.template cast<T>()).array().colwise() * inv_scale.array();
  encode_columns<T>(normalized, cfg.pos_frequencies, inv_scale, ws.pos_enc,
                    flags.density_gradient ? &ws.pos_enc_tangent : nullptr);

  const int L = cfg.trunk_layers;
  ws.trunk_z.resize(L);
  ws.trunk_a.resize(L);
  const MatX<T>* in = &ws.pos_enc;
  for (int l = 0; l < L; ++l) {
    ws.trunk_z[l].noalias() = weight(layout_.trunk_weights[l]) * (*in);
    ws.trunk_z[l].colwise() += bias(layout_.trunk_biases[l]);
    activate(cfg.activation, ws.trunk_z[l], ws.trunk_a[l]);
    in = &ws.trunk_a[l];
  }
  const MatX<T>& feat = ws.trunk_a[L - 1];

  ws.raw_density.noalias() = weight(layout_.density_weight) * feat;
  ws.raw_density.array() += bias(layout_.density_bias)(0);
  softplus(ws.raw_density, ws.density);

  if (flags.density_gradient) {
    ws.trunk_tangent_z.resize(L);
    ws.trunk_tangent_a.resize(L);
    MatX<T> slope;
    const MatX<T>* tin = &ws.pos_enc_tangent;
    for (int l = 0; l < L; ++l) {
      ws.trunk_tangent_z[l].noalias() = weight(layout_.trunk_weights[l]) * (*tin);
      activation_slope(cfg.activation, ws.trunk_z[l], slope);
      ws.trunk_tangent_a[l] = ws.trunk_tangent_z[l];
      scale_blocks(ws.trunk_tangent_a[l], slope);
      tin = &ws.trunk_tangent_a[l];
    }
    const MatX<T> flat = weight(layout_.density_weight) * ws.trunk_tangent_a[L - 1];  // 1 x 3N
    ws.raw_density_grad.resize(3, N);
    for (int a = 0; a < 3; ++a) ws.raw_density_grad.row(a) = flat.middleCols(a * N, N);
    MatX<T> s;
    sigmoid(ws.raw_density, s);
    ws.density_grad = ws.raw_density_grad.array().rowwise() * s.row(0).array();
  }

  if (flags.radiance) {
    const Eigen::Matrix<T, 3, 1> ones = Eigen::Matrix<T, 3, 1>::Ones();
    encode_columns<T>(*dirs, cfg.dir_frequencies, ones, ws.dir_enc, nullptr);
    const int R = cfg.radiance_layers;
    ws.rad_z.resize(R);
    ws.rad_a.resize(R);
    for (int l = 0; l < R; ++l) {
      const auto W = weight(layout_.radiance_weights[l]);
      if (l == 0) {
        ws.rad_z[0].noalias() = W.leftCols(cfg.trunk_width) * feat;
        ws.rad_z[0].noalias() += W.rightCols(cfg.dir_encoding_size()) * ws.dir_enc;
      } else {
        ws.rad_z[l].noalias() = W * ws.rad_a[l - 1];
      }
      ws.rad_z[l].colwise() += bias(layout_.radiance_biases[l]);
      activate(cfg.activation, ws.rad_z[l], ws.rad_a[l]);
    }
    MatX<T> out = weight(layout_.radiance_weights[R]) * ws.rad_a[R - 1];
    out.colwise() += bias(layout_.radiance_biases[R]);
    sigmoid(out, ws.rgb);
  }

  if (cfg.predict_normals) {
    ws.normal_raw.noalias() = weight(layout_.normal_weight) * feat;
    ws.normal_raw.colwise() += bias(layout_.normal_bias);
    const auto norms = ws.normal_raw.colwise().norm().array().max(T(1e-12));
    ws.pred_normal = ws.normal_raw.array().rowwise() / norms;
  }
}

template <typename T>
void FieldEvaluator<T>::backward(Workspace& ws, const Adjoints& adj, T* grad) const {
  VecX<T> g = VecX<T>::Zero(static_cast<Eigen::Index>(layout_.total()));
  backward_aligned(ws, adj, g.data());
  for (Eigen::Index i = 0; i < g.size(); ++i) grad[i] += g[i];
}

template <typename T>
void FieldEvaluator<T>::backward_aligned(Workspace& ws, const Adjoints& adj, T* grad) const {
  const FieldConfig& cfg = params_.config;
  const Eigen::Index N = ws.n;
  const int L = cfg.trunk_layers;
  auto gW = [&](int idx) {
    const auto& b = layout_.blocks()[idx];
    return Eigen::Map<MatX<T>>(grad + b.offset, b.rows, b.cols);
  };
  auto gb = [&](int idx) {
    const auto& b = layout_.blocks()[idx];
    return Eigen::Map<VecX<T>>(grad + b.offset, b.rows);
  };

  MatX<T> s;  // sigmoid(raw density) = d softplus
  sigmoid(ws.raw_density, s);
  MatX<T> adj_raw = MatX<T>::Zero(1, N);
  if (adj.density) adj_raw.array() += adj.density->array() * s.array();

  // Second-order path: density_grad = s(raw) * W_d * tangent(feat).
  ws.adj_z_from_tangent.assign(L, MatX<T>());
  if (adj.density_grad) {
    if (!ws.flags.density_gradient) throw InvalidArgument("backward: density gradient was not computed");
    const MatX<T>& ag = *adj.density_grad;
    adj_raw.array() += (s.array() * (T(1) - s.array())) *
                       (ag.array() * ws.raw_density_grad.array()).colwise().sum();
    MatX<T> adj_flat(1, 3 * N);
    for (int a = 0; a < 3; ++a) adj_flat.middleCols(a * N, N) = ag.row(a).array() * s.row(0).array();
    gW(layout_.density_weight).noalias() += adj_flat * ws.trunk_tangent_a[L - 1].transpose();
    ws.adj_tan_a.noalias() = weight(layout_.density_weight).transpose() * adj_flat;
    MatX<T> slope, curvature;
    for (int l = L - 1; l >= 0; --l) {
      activation_slope(cfg.activation, ws.trunk_z[l], slope);
      ws.adj_tan_z = ws.adj_tan_a;
      scale_blocks(ws.adj_tan_z, slope);
      if (cfg.activation == Activation::Softplus) {
        curvature = slope.array() * (T(1) - slope.array());
        MatX<T> acc = MatX<T>::Zero(cfg.trunk_width, N);
        for (int a = 0; a < 3; ++a) {
          acc.array() += ws.trunk_tangent_z[l].middleCols(a * N, N).array() *
                         ws.adj_tan_a.middleCols(a * N, N).array();
        }
        ws.adj_z_from_tangent[l] = acc.array() * curvature.array();
      }
      const MatX<T>& tin = l == 0 ? ws.pos_enc_tangent : ws.trunk_tangent_a[l - 1];
      gW(layout_.trunk_weights[l]).noalias() += ws.adj_tan_z * tin.transpose();
      if (l > 0) ws.adj_tan_a.noalias() = weight(layout_.trunk_weights[l]).transpose() * ws.adj_tan_z;
    }
  }

  const MatX<T>& feat = ws.trunk_a[L - 1];
  gW(layout_.density_weight).noalias() += adj_raw * feat.transpose();
  gb(layout_.density_bias)(0) += adj_raw.sum();
  MatX<T> adj_feat = weight(layout_.density_weight).transpose() * adj_raw;

  if (adj.rgb) {
    if (!ws.flags.radiance) throw InvalidArgument("backward: radiance was not computed");
    const int R = cfg.radiance_layers;
    MatX<T> adj_out = adj.rgb->array() * ws.rgb.array() * (T(1) - ws.rgb.array());
    gW(layout_.radiance_weights[R]).noalias() += adj_out * ws.rad_a[R - 1].transpose();
    gb(layout_.radiance_biases[R]) += adj_out.rowwise().sum();
    MatX<T> adj_a = weight(layout_.radiance_weights[R]).transpose() * adj_out;
    MatX<T> slope;
    for (int l = R - 1; l >= 0; --l) {
      activation_slope(cfg.activation, ws.rad_z[l], slope);
      MatX<T> adj_z = adj_a.array() * slope.array();
      gb(layout_.radiance_biases[l]) += adj_z.rowwise().sum();
      const auto W = weight(layout_.radiance_weights[l]);
      if (l == 0) {
        auto G = gW(layout_.radiance_weights[0]);
        G.leftCols(cfg.trunk_width).noalias() += adj_z * feat.transpose();
        G.rightCols(cfg.dir_encoding_size()).noalias() += adj_z * ws.dir_enc.transpose();
        adj_feat.noalias() += W.leftCols(cfg.trunk_width).transpose() * adj_z;
      } else {
        gW(layout_.radiance_weights[l]).noalias() += adj_z * ws.rad_a[l - 1].transpose();
        adj_a.noalias() = W.transpose() * adj_z;
      }
    }
  }

  if (adj.pred_normal && cfg.predict_normals) {
    const MatX<T>& an = *adj.pred_normal;
    const auto norms = ws.normal_raw.colwise().norm().array().max(T(1e-12)).eval();
    const auto proj = (ws.pred_normal.array() * an.array()).colwise().sum().eval();
    MatX<T> adj_u = (an.array() - ws.pred_normal.array().rowwise() * proj).rowwise() / norms;
    gW(layout_.normal_weight).noalias() += adj_u * feat.transpose();
    gb(layout_.normal_bias) += adj_u.rowwise().sum();
    adj_feat.noalias() += weight(layout_.normal_weight).transpose() * adj_u;
  }

  MatX<T> slope;
  ws.adj_a = std::move(adj_feat);
  for (int l = L - 1; l >= 0; --l) {
    activation_slope(cfg.activation, ws.trunk_z[l], slope);
    ws.adj_z = ws.adj_a.array() * slope.array();
    if (ws.adj_z_from_tangent[l].size() > 0) ws.adj_z += ws.adj_z_from_tangent[l];
    const MatX<T>& in = l == 0 ? ws.pos_enc : ws.trunk_a[l - 1];
    gW(layout_.trunk_weights[l]).noalias() += ws.adj_z * in.transpose();
    gb(layout_.trunk_biases[l]) += ws.adj_z.rowwise().sum();
    if (l > 0) ws.adj_a.noalias() = weight(layout_.trunk_weights[l]).transpose() * ws.adj_z;
  }
}

// ---------------------------------------------------------------- queries

template <typename T>
FieldOutput query(const FieldParamsT<T>& params, const Vec3& x, const Vec3& d) {
  if (!x.allFinite()) throw InvalidArgument("query: non-finite position");
  if (std::abs(d.norm() - 1.0) > 1e-6) throw InvalidArgument("query: direction is not unit length");
  FieldEvaluator<T> eval(params);
  typename FieldEvaluator<T>::Workspace ws;
  MatX<T> pos = x.cast<T>();
  MatX<T> dir = d.cast<T>();
  eval.forward(pos, &dir, {true, true}, ws);
  FieldOutput out;
  out.density = static_cast<double>(ws.density(0, 0));
  out.radiance.resize(params.config.n_channels);
  for (int c = 0; c < params.config.n_channels; ++c) out.radiance[c] = static_cast<double>(ws.rgb(c, 0));
  out.density_gradient = ws.density_grad.col(0).template cast<double>();
  if (params.config.predict_normals) out.predicted_normal = ws.pred_normal.col(0).template cast<double>();
  return out;
}

template <typename T>
BatchGradResult query_batch_with_grad(const FieldParamsT<T>& params, const std::vector<Vec3>& points,
                                      const std::vector<Vec3>& dirs, const MatX<T>& adj_density,
                                      const MatX<T>& adj_rgb) {
  const Eigen::Index N = static_cast<Eigen::Index>(points.size());
  if (dirs.size() != points.size() || adj_density.rows() != 1 || adj_density.cols() != N ||
      adj_rgb.rows() != params.config.n_channels || adj_rgb.cols() != N) {
    throw InvalidArgument("query_batch_with_grad: shape mismatch");
  }
  FieldEvaluator<T> eval(params);
  typename FieldEvaluator<T>::Workspace ws;
  MatX<T> pos(3, N), dir(3, N);
  for (Eigen::Index j = 0; j < N; ++j) {
    pos.col(j) = points[j].cast<T>();
    dir.col(j) = dirs[j].cast<T>();
  }
  eval.forward(pos, &dir, {true, true}, ws);
  std::vector<T> grad(eval.layout().total(), T(0));
  typename FieldEvaluator<T>::Adjoints adj;
  adj.density = &adj_density;
  adj.rgb = &adj_rgb;
  eval.backward(ws, adj, grad.data());

  BatchGradResult res;
  res.param_grad.assign(grad.begin(), grad.end());
  res.outputs.resize(N);
  for (Eigen::Index j = 0; j < N; ++j) {
    auto& o = res.outputs[j];
    o.density = static_cast<double>(ws.density(0, j));
    o.radiance.resize(params.config.n_channels);
    for (int c = 0; c < params.config.n_channels; ++c) o.radiance[c] = static_cast<double>(ws.rgb(c, j));
    o.density_gradient = ws.density_grad.col(j).template cast<double>();
    if (params.config.predict_normals) o.predicted_normal = ws.pred_normal.col(j).template cast<double>();
  }
  return res;
}

template class FieldEvaluator<float>;
template class FieldEvaluator<double>;
template FieldParamsT<float> init_params<float>(const FieldConfig&, std::uint64_t);
template FieldParamsT<double> init_params<double>(const FieldConfig&, std::uint64_t);
template FieldOutput query<float>(const FieldParamsT<float>&, const Vec3&, const Vec3&);
template FieldOutput query<double>(const FieldParamsT<double>&, const Vec3&, const Vec3&);
template BatchGradResult query_batch_with_grad<float>(const FieldParamsT<float>&, const std::vector<Vec3>&,
                                                      const std::vector<Vec3>&, const MatX<float>&,
                                                      const MatX<float>&);
template BatchGradResult query_batch_with_grad<double>(const FieldParamsT<double>&, const std::vector<Vec3>&,
                                                       const std::vector<Vec3>&, const MatX<double>&,
                                                       const MatX<double>&);

// ---------------------------------------------------------------- checkpoint

std::string to_string(Stage s) { return s == Stage::Pretrain ? "pretrain" : "finetune"; }

Stage stage_from_string(const std::string& s) {
  if (s == "pretrain") return Stage::Pretrain;
  if (s == "finetune") return Stage::Finetune;
  throw InvalidArgument("unknown stage: " + s);
}

namespace {

constexpr char kMagic[8] = {'H', 'S', 'N', 'E', 'R', 'F', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

void write_floats(std::ofstream& out, const std::vector<float>& v) {
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
}

std::vector<float> read_floats(std::ifstream& in, std::size_t n) {
  std::vector<float> v(n);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(float)));
  if (!in) throw IoError("checkpoint truncated");
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const ParamLayout layout(ckpt.params.config);
  if (ckpt.params.theta.size() != layout.total()) throw InvalidArgument("checkpoint: parameter count mismatch");
  const bool moments = !ckpt.adam_m.empty();
  if (moments && (ckpt.adam_m.size() != layout.total() || ckpt.adam_v.size() != layout.total())) {
    throw InvalidArgument("checkpoint: optimizer state size mismatch");
  }
  json meta{{"config", config_json(ckpt.params.config)},
            {"seed", ckpt.params.seed},
            {"step", ckpt.step},
            {"stage", to_string(ckpt.stage)},
            {"param_count", layout.total()},
            {"has_optimizer_state", moments},
            {"adam_t", moments ? ckpt.adam_t : 0}};
  const std::string text = meta.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path.string());
  out.write(kMagic, sizeof(kMagic));
  out.write(reinterpret_cast<const char*>(&kVersion), sizeof(kVersion));
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  write_floats(out, ckpt.params.theta);
  if (moments) {
    write_floats(out, ckpt.adam_m);
    write_floats(out, ckpt.adam_v);
  }
  if (!out) throw IoError("failed writing checkpoint: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  char magic[8];
  std::uint32_t version = 0;
  std::uint64_t len = 0;
  in.read(magic, sizeof(magic));
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw IoError("not a checkpoint file: " + path.string());
  if (version != kVersion) throw IoError("unsupported checkpoint version " + std::to_string(version));
  if (len > (1u << 24)) throw IoError("checkpoint metadata too large");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw IoError("checkpoint truncated");

  Checkpoint ckpt;
  try {
    const json meta = json::parse(text);
    ckpt.params.config = config_from(meta.at("config"));
    ckpt.params.seed = meta.at("seed").get<std::uint64_t>();
    ckpt.step = meta.at("step").get<std::int64_t>();
    ckpt.stage = stage_from_string(meta.at("stage").get<std::string>());
    const std::size_t count = meta.at("param_count").get<std::size_t>();
    if (count != ParamLayout(ckpt.params.config).total()) throw IoError("checkpoint parameter count mismatch");
    ckpt.params.theta = read_floats(in, count);
    if (meta.at("has_optimizer_state").get<bool>()) {
      ckpt.adam_m = read_floats(in, count);
      ckpt.adam_v = read_floats(in, count);
      ckpt.adam_t = meta.value("adam_t", ckpt.step);
    }
  } catch (const json::exception& e) {
    throw IoError(std::string("bad checkpoint metadata: ") + e.what());
  }
  in.peek();
  if (!in.eof()) throw IoError("trailing bytes in checkpoint");
  return ckpt;
}

}  // namespace hsnerf
