#include "hsnerf/spatial_eval.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <memory>
#include <sstream>
#include <tuple>

#include "hsnerf/parallel.hpp"
#include "hsnerf/plot.hpp"

namespace hsnerf {

namespace {

constexpr std::size_t kBruteForceLimit = 2000;

void require_nonempty(const std::vector<Vec3>& a, const char* what) {
  if (a.empty()) throw InvalidArgument(std::string(what) + ": point cloud is empty");
}

std::vector<Vec3> stride_subsample(const std::vector<Vec3>& pts, std::size_t max_points) {
  if (max_points == 0 || pts.size() <= max_points) return pts;
  std::vector<Vec3> out;
  out.reserve(max_points);
  for (std::size_t k = 0; k < max_points; ++k) out.push_back(pts[k * pts.size() / max_points]);
  return out;
}

}  // namespace

RigidTransform RigidTransform::compose(const RigidTransform& inner) const {
  return {rotation * inner.rotation, rotation * inner.translation + translation};
}

void RigidTransform::validate() const {
  if (!rotation.allFinite() || !translation.allFinite()) throw NumericError("rigid transform is not finite");
  if ((rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-9)
    throw NumericError("rigid transform rotation is not orthonormal");
  if (rotation.determinant() < 0.0) throw NumericError("rigid transform is a reflection");
}

std::vector<double> nearest_distances_brute(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  require_nonempty(a, "nearest_distances");
  require_nonempty(b, "nearest_distances");
  std::vector<double> out(a.size());
  parallel_for(a.size(), [&](std::size_t i) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& p : b) best = std::min(best, (p - a[i]).norm());
    out[i] = best;
  });
  return out;
}

std::vector<double> nearest_distances(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  if (b.size() <= kBruteForceLimit) return nearest_distances_brute(a, b);
  require_nonempty(a, "nearest_distances");
  const GridIndex index(b);
  std::vector<double> out(a.size());
  parallel_for(a.size(), [&](std::size_t i) { out[i] = index.nearest(a[i]).second; });
  return out;
}

double fscore(double p, double r) { return (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

PrResult precision_recall_from_distances(const std::vector<double>& d_sc, const std::vector<double>& d_gt,
                                         double eps) {
  if (!(eps >= 0.0)) throw InvalidArgument("precision_recall: eps must be >= 0");
  if (d_sc.empty() || d_gt.empty()) throw InvalidArgument("precision_recall: empty cloud");
  auto frac = [eps](const std::vector<double>& d) {
    const auto n = std::count_if(d.begin(), d.end(), [eps](double v) { return v <= eps; });
    return static_cast<double>(n) / static_cast<double>(d.size());
  };
  PrResult r;
  r.precision = frac(d_sc);
  r.recall = frac(d_gt);
  r.fscore = fscore(r.precision, r.recall);
  return r;
}

PrResult precision_recall(const std::vector<Vec3>& sc, const std::vector<Vec3>& gt, double eps) {
  if (!(eps >= 0.0)) throw InvalidArgument("precision_recall: eps must be >= 0");
  return precision_recall_from_distances(nearest_distances(sc, gt), nearest_distances(gt, sc), eps);
}

RigidTransform fit_rigid(const std::vector<Vec3>& src, const std::vector<Vec3>& dst) {
  if (src.size() != dst.size()) throw InvalidArgument("fit_rigid: point counts differ");
  if (src.size() < 3) throw NumericError("fit_rigid: need at least 3 points");
  Vec3 ms = Vec3::Zero(), md = Vec3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    ms += src[i];
    md += dst[i];
  }
  ms /= static_cast<double>(src.size());
  md /= static_cast<double>(src.size());
  Mat3 h = Mat3::Zero();
  Mat3 cov_s = Mat3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const Vec3 a = src[i] - ms;
    h += a * (dst[i] - md).transpose();
    cov_s += a * a.transpose();
  }
  // Collinear or coincident sources leave the rotation about their axis
  // undetermined.
  const Eigen::JacobiSVD<Mat3> geom(cov_s);
  const auto sv_geom = geom.singularValues();
  if (!(sv_geom[0] > 0.0) || sv_geom[1] <= 1e-12 * sv_geom[0]) {
    throw NumericError("fit_rigid: degenerate geometry (points are collinear or coincident)");
  }
  const Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto sv = svd.singularValues();
  if (!(sv[0] > 0.0) || sv[1] <= 1e-12 * sv[0]) {
    throw NumericError("fit_rigid: rank-deficient cross-covariance");
  }
  const Mat3 u = svd.matrixU(), v = svd.matrixV();
  Mat3 d = Mat3::Identity();
  d(2, 2) = (v * u.transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  RigidTransform t;
  t.rotation = v * d * u.transpose();
  t.translation = md - t.rotation * ms;
  return t;
}

IcpResult icp_align(const std::vector<Vec3>& source_in, const std::vector<Vec3>& target_in, const IcpOptions& opts) {
  if (opts.max_iters < 1) throw InvalidArgument("icp_align: max_iters must be >= 1");
  if (!(opts.tol >= 0.0)) throw InvalidArgument("icp_align: tol must be >= 0");
  if (source_in.size() < 3 || target_in.size() < 3) throw NumericError("icp_align: need at least 3 points per cloud");
  const auto source = stride_subsample(source_in, opts.max_points);
  const auto target = stride_subsample(target_in, opts.max_points);

  const bool brute = target.size() <= kBruteForceLimit;
  std::unique_ptr<GridIndex> index;
  if (!brute) index = std::make_unique<GridIndex>(target);

  std::vector<Vec3> matched(source.size());
  std::vector<double> sq(source.size());
  auto correspond = [&](const RigidTransform& t) {
    parallel_for(source.size(), [&](std::size_t i) {
      const Vec3 p = t.apply(source[i]);
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      if (brute) {
        for (std::size_t j = 0; j < target.size(); ++j) {
          const double d = (target[j] - p).norm();
          if (d < best_d) {
            best_d = d;
            best = j;
          }
        }
      } else {
        std::tie(best, best_d) = index->nearest(p);
      }
      matched[i] = target[best];
      sq[i] = best_d * best_d;
    });
    double s = 0.0;
    for (double v : sq) s += v;
    return std::sqrt(s / static_cast<double>(sq.size()));
  };

  IcpResult res;
  double rms = correspond(res.transform);
  res.rms_history.push_back(rms);
  for (int it = 0; it < opts.max_iters && rms > 0.0; ++it) {
    const RigidTransform next = fit_rigid(source, matched);
    const double prev = rms;
    rms = correspond(next);
    res.transform = next;
    res.iterations = it + 1;
    res.rms_history.push_back(rms);
    if (std::abs(prev - rms) < opts.tol) break;
  }
  res.rms = rms;
  res.transform.validate();
  return res;
}

std::vector<double> parse_eps_grid(const std::string& spec) {
  std::vector<double> parts;
  std::stringstream ss(spec);
  std::string tok;
  while (std::getline(ss, tok, ':')) {
    try {
      std::size_t used = 0;
      parts.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw InvalidArgument("bad eps grid '" + spec + "': expected lo:hi:step");
    }
  }
  if (parts.size() != 3) throw InvalidArgument("bad eps grid '" + spec + "': expected lo:hi:step");
  const double lo = parts[0], hi = parts[1], step = parts[2];
  if (!(lo >= 0.0) || !(hi >= lo) || !(step > 0.0)) throw InvalidArgument("bad eps grid '" + spec + "'");
  std::vector<double> grid;
  const auto n = static_cast<long>(std::floor((hi - lo) / step + 0.5));
  for (long k = 0; k <= n; ++k) grid.push_back(lo + static_cast<double>(k) * step);
  return grid;
}

PrCurve pr_sweep(const std::vector<Vec3>& sc, const std::vector<Vec3>& gt, const std::vector<double>& eps_grid,
                 const SweepOptions& opts) {
  if (eps_grid.empty()) throw InvalidArgument("pr_sweep: empty threshold grid");
  for (double e : eps_grid)
    if (!(e >= 0.0)) throw InvalidArgument("pr_sweep: thresholds must be >= 0");
  require_nonempty(sc, "pr_sweep");
  require_nonempty(gt, "pr_sweep");
  PrCurve curve;
  std::vector<Vec3> aligned = sc;
  if (opts.align) {
    curve.alignment = icp_align(sc, gt, opts.icp);
    for (auto& p : aligned) p = curve.alignment.transform.apply(p);
  }
  const auto d_sc = nearest_distances(aligned, gt);
  const auto d_gt = nearest_distances(gt, aligned);
  curve.best_fscore = -1.0;
  for (double e : eps_grid) {
    const auto r = precision_recall_from_distances(d_sc, d_gt, e);
    curve.eps.push_back(e);
    curve.precision.push_back(r.precision);
    curve.recall.push_back(r.recall);
    curve.fscore.push_back(r.fscore);
    if (r.fscore > curve.best_fscore || (r.fscore == curve.best_fscore && e < curve.best_eps)) {
      curve.best_fscore = r.fscore;
      curve.best_eps = e;
    }
  }
  return curve;
}

void write_pr_csv(const std::filesystem::path& path, const PrCurve& curve) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "epsilon_m,precision,recall,fscore\n" << std::setprecision(10);
  for (std::size_t i = 0; i < curve.eps.size(); ++i) {
    out << curve.eps[i] << "," << 100.0 * curve.precision[i] << "," << 100.0 * curve.recall[i] << ","
        << 100.0 * curve.fscore[i] << "\n";
  }
  if (!out) throw IoError("failed writing " + path.string());
}

void write_pr_plot(const std::filesystem::path& path, const PrCurve& curve) {
  if (curve.eps.empty()) throw InvalidArgument("write_pr_plot: empty curve");
  double lo = *std::min_element(curve.eps.begin(), curve.eps.end());
  double hi = *std::max_element(curve.eps.begin(), curve.eps.end());
  if (hi <= lo) {
    lo -= 0.5 * std::max(lo, 1e-3);
    hi += 0.5 * std::max(hi, 1e-3);
  }
  LinePlot plot(640, 400, lo, hi, 0.0, 1.05);
  plot.add_series(curve.eps, curve.precision, {31, 119, 180});
  plot.add_series(curve.eps, curve.recall, {255, 127, 14});
  plot.add_series(curve.eps, curve.fscore, {44, 160, 44});
  plot.add_vertical_marker(curve.best_eps, {0, 0, 0}, true);
  plot.save(path);
}

}  // namespace hsnerf
