#include "hsnerf/losses.hpp"

#include <cmath>
#include <cstdio>

namespace hsnerf {

void LossWeights::validate() const {
  for (double v : {hsi, ang, prop, dist, ori, pn}) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw InvalidArgument("loss weights must be finite and >= 0");
  }
  if (!(ang_eps > 0.0)) throw InvalidArgument("angular epsilon must be > 0");
}

LossWeights spectral_weights(double lambda_ang, double lambda_hsi) {
  LossWeights w;
  w.ang = lambda_ang;
  w.hsi = lambda_hsi;
  w.validate();
  return w;
}

double weighted_total(const LossReport& r, const LossWeights& w) {
  return w.hsi * r.hsi + w.ang * r.ang + w.dist * r.dist + w.ori * r.ori + w.pn * r.pn;
}

namespace kernel {

template <typename T>
T hsi(int n, const T* pred, const T* target, T scale, T* g_pred) {
  T sum = T(0);
  for (int i = 0; i < n; ++i) {
    const T d = pred[i] - target[i];
    sum += d * d;
    if (g_pred) g_pred[i] += scale * T(2) * d;
  }
  return sum;
}

template <typename T>
T angular(int n, const T* pred, const T* target, T eps, T scale, T* g_pred) {
  T dot = T(0), pp = T(0), tt = T(0);
  for (int i = 0; i < n; ++i) {
    dot += pred[i] * target[i];
    pp += pred[i] * pred[i];
    tt += target[i] * target[i];
  }
  const T np = std::sqrt(pp);
  const T nt = std::sqrt(tt);
  const T den = np * nt + eps;
  const T cos = dot / den;
  if (g_pred) {
    // d(1 - cos)/dp = -(t/den - dot * nt * p/|p| / den^2)
    const T k = np > T(0) ? dot * nt / (den * den * np) : T(0);
    for (int i = 0; i < n; ++i) g_pred[i] += scale * (k * pred[i] - target[i] / den);
  }
  return T(1) - cos;
}

template <typename T>
T distortion(int S, const T* mid, const T* ds, const T* w, T scale, T* g_w) {
  // sum_{i,j} w_i w_j |m_i - m_j| = 2 sum_i w_i (m_i W_<i - M_<i)
  T W = T(0), M = T(0), pair = T(0), self = T(0);
  for (int i = 0; i < S; ++i) {
    pair += w[i] * (mid[i] * W - M);
    W += w[i];
    M += w[i] * mid[i];
    self += w[i] * w[i] * ds[i];
  }
  if (g_w) {
    // d/dw_k = 2 sum_j w_j |m_k - m_j| + (2/3) w_k ds_k
    T Wl = T(0), Ml = T(0);
    for (int k = 0; k < S; ++k) {
      const T Wr = W - Wl - w[k];
      const T Mr = M - Ml - w[k] * mid[k];
      const T g = T(2) * ((mid[k] * Wl - Ml) + (Mr - mid[k] * Wr)) + T(2) / T(3) * w[k] * ds[k];
      g_w[k] += scale * g;
      Wl += w[k];
      Ml += w[k] * mid[k];
    }
  }
  return T(2) * pair + self / T(3);
}

template <typename T>
T orientation(int S, const T* normals, const std::uint8_t* valid, const T* view, const T* w, T scale, T* g_w,
              T* g_normals) {
  T sum = T(0);
  for (int i = 0; i < S; ++i) {
    if (valid && !valid[i]) continue;
    const T* n = normals + 3 * i;
    const T c = n[0] * view[0] + n[1] * view[1] + n[2] * view[2];
    const T f = T(1) - c * c;
    sum += w[i] * f;
    if (g_w) g_w[i] += scale * f;
    if (g_normals) {
      for (int a = 0; a < 3; ++a) g_normals[3 * i + a] += scale * w[i] * T(-2) * c * view[a];
    }
  }
  return sum;
}

template <typename T>
T predicted_normal(int S, const T* derived, const T* predicted, const std::uint8_t* valid, const T* w, T scale,
                   T* g_w, T* g_derived, T* g_predicted) {
  T sum = T(0);
  for (int i = 0; i < S; ++i) {
    if (valid && !valid[i]) continue;
    const T* a = derived + 3 * i;
    const T* b = predicted + 3 * i;
    const T f = T(1) - (a[0] * b[0] + a[1] * b[1] + a[2] * b[2]);
    sum += w[i] * f;
    if (g_w) g_w[i] += scale * f;
    for (int k = 0; k < 3; ++k) {
      if (g_derived) g_derived[3 * i + k] -= scale * w[i] * b[k];
      if (g_predicted) g_predicted[3 * i + k] -= scale * w[i] * a[k];
    }
  }
  return sum;
}

#define HSNERF_KERNELS(T)                                                                                  \
  template T hsi<T>(int, const T*, const T*, T, T*);                                                       \
  template T angular<T>(int, const T*, const T*, T, T, T*);                                                \
  template T distortion<T>(int, const T*, const T*, const T*, T, T*);                                      \
  template T orientation<T>(int, const T*, const std::uint8_t*, const T*, const T*, T, T*, T*);            \
  template T predicted_normal<T>(int, const T*, const T*, const std::uint8_t*, const T*, T, T*, T*, T*);
HSNERF_KERNELS(float)
HSNERF_KERNELS(double)
#undef HSNERF_KERNELS

}  // namespace kernel

namespace {

std::size_t selected_count(std::span<const std::uint8_t> omega, Eigen::Index rows) {
  if (omega.empty()) return static_cast<std::size_t>(rows);
  if (static_cast<Eigen::Index>(omega.size()) != rows) throw InvalidArgument("loss: mask length differs from pixel count");
  std::size_t n = 0;
  for (auto v : omega) n += v != 0;
  return n;
}

void check_shapes(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw InvalidArgument("loss: prediction and target shapes differ");
}

}  // namespace

double loss_hsi(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target, std::span<const std::uint8_t> omega,
                Eigen::MatrixXd* grad) {
  check_shapes(pred, target);
  const std::size_t n = selected_count(omega, pred.rows());
  if (n == 0) throw InvalidArgument("loss_hsi: empty pixel set");
  if (grad) grad->setZero(pred.rows(), pred.cols());
  const Eigen::MatrixXd p = pred.transpose();
  const Eigen::MatrixXd t = target.transpose();
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(p.rows(), p.cols());
  double sum = 0.0;
  for (Eigen::Index r = 0; r < p.cols(); ++r) {
    if (!omega.empty() && !omega[r]) continue;
    sum += kernel::hsi<double>(static_cast<int>(p.rows()), p.col(r).data(), t.col(r).data(), 1.0 / n,
                               grad ? g.col(r).data() : nullptr);
  }
  if (grad) *grad = g.transpose();
  return sum / n;
}

double loss_angular(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target, std::span<const std::uint8_t> omega,
                    double eps, Eigen::MatrixXd* grad) {
  check_shapes(pred, target);
  if (!(eps > 0.0)) throw InvalidArgument("loss_angular: eps must be > 0");
  const std::size_t n = selected_count(omega, pred.rows());
  if (n == 0) throw InvalidArgument("loss_angular: empty pixel set");
  const Eigen::MatrixXd p = pred.transpose();
  const Eigen::MatrixXd t = target.transpose();
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(p.rows(), p.cols());
  double sum = 0.0;
  for (Eigen::Index r = 0; r < p.cols(); ++r) {
    if (!omega.empty() && !omega[r]) continue;
    sum += kernel::angular<double>(static_cast<int>(p.rows()), p.col(r).data(), t.col(r).data(), eps, 1.0 / n,
                                   grad ? g.col(r).data() : nullptr);
  }
  if (grad) *grad = g.transpose();
  return sum / n;
}

double loss_distortion(const RaySamples& samples, std::span<const double> weights) {
  const std::size_t S = samples.size();
  if (weights.size() != S) throw InvalidArgument("loss_distortion: weight count differs from sample count");
  std::vector<double> mid(S);
  for (std::size_t i = 0; i < S; ++i) mid[i] = samples.s[i] + 0.5 * samples.ds[i];
  return kernel::distortion<double>(static_cast<int>(S), mid.data(), samples.ds.data(), weights.data(), 0.0, nullptr);
}

double loss_orientation(std::span<const Vec3> normals, std::span<const std::uint8_t> valid, const Vec3& view_dir,
                        std::span<const double> weights) {
  const std::size_t S = normals.size();
  if (weights.size() != S || (!valid.empty() && valid.size() != S)) throw InvalidArgument("loss_orientation: size mismatch");
  std::vector<double> flat(3 * S);
  for (std::size_t i = 0; i < S; ++i)
    for (int a = 0; a < 3; ++a) flat[3 * i + a] = normals[i][a];
  return kernel::orientation<double>(static_cast<int>(S), flat.data(), valid.empty() ? nullptr : valid.data(),
                                     view_dir.data(), weights.data(), 0.0, nullptr, nullptr);
}

double loss_predicted_normal(std::span<const Vec3> predicted, std::span<const Vec3> derived,
                             std::span<const std::uint8_t> valid, std::span<const double> weights) {
  const std::size_t S = predicted.size();
  if (derived.size() != S || weights.size() != S || (!valid.empty() && valid.size() != S)) {
    throw InvalidArgument("loss_predicted_normal: size mismatch");
  }
  std::vector<double> a(3 * S), b(3 * S);
  for (std::size_t i = 0; i < S; ++i)
    for (int k = 0; k < 3; ++k) {
      a[3 * i + k] = derived[i][k];
      b[3 * i + k] = predicted[i][k];
    }
  return kernel::predicted_normal<double>(static_cast<int>(S), a.data(), b.data(),
                                          valid.empty() ? nullptr : valid.data(), weights.data(), 0.0, nullptr,
                                          nullptr, nullptr);
}

std::string loss_csv_header() { return "step,L_hsi,L_ang,L_dist,L_ori,L_pn,total"; }

std::string loss_csv_row(std::int64_t step, const LossReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%lld,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g", static_cast<long long>(step), r.hsi, r.ang,
                r.dist, r.ori, r.pn, r.total);
  return buf;
}

}  // namespace hsnerf
