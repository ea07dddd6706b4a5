#include "hsnerf/spectral_eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>


namespace hsnerf {

MeanSd mean_sd(std::span<const double> values) {
  MeanSd out;
  if (values.empty()) return out;
  double sum = 0.0;
  for (double v : values) sum += v;
  out.mean = sum / values.size();
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.sd = std::sqrt(ss / (values.size() - 1));
  }
  return out;
}

namespace {

// Pixel indices selected by omega; throws when the selection is empty.
std::vector<std::size_t> selection(const HyperCube& pred, const HyperCube& gt, const Mask* omega) {
  if (pred.height() != gt.height() || pred.width() != gt.width() || pred.bands() != gt.bands()) {
    throw InvalidArgument("metric: cube shapes differ");
  }
  std::vector<std::size_t> idx;
  const std::size_t P = gt.pixel_count();
  if (omega) {
    if (omega->height() != gt.height() || omega->width() != gt.width()) throw InvalidArgument("metric: mask shape differs");
    for (std::size_t p = 0; p < P; ++p)
      if (omega->at(p)) idx.push_back(p);
  } else {
    idx.resize(P);
    for (std::size_t p = 0; p < P; ++p) idx[p] = p;
  }
  if (idx.empty()) throw InvalidArgument("metric: empty pixel set");
  return idx;
}

}  // namespace

double sam(const HyperCube& pred, const HyperCube& gt, const Mask* omega, double delta) {
  if (!(delta > 0.0)) throw InvalidArgument("sam: delta must be > 0");
  const auto idx = selection(pred, gt, omega);
  double sum = 0.0;
  for (std::size_t p : idx) {
    const auto a = pred.spectrum(p);
    const auto b = gt.spectrum(p);
    double dot = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      dot += static_cast<double>(a[i]) * b[i];
      aa += static_cast<double>(a[i]) * a[i];
      bb += static_cast<double>(b[i]) * b[i];
    }
    sum += std::acos(std::clamp(dot / (std::sqrt(aa) * std::sqrt(bb) + delta), -1.0, 1.0));
  }
  return sum / idx.size();
}

double spectral_rmse(const HyperCube& pred, const HyperCube& gt, const Mask* omega) {
  const auto idx = selection(pred, gt, omega);
  const int L = gt.bands();
  double sum = 0.0;
  for (std::size_t p : idx) {
    const auto a = pred.spectrum(p);
    const auto b = gt.spectrum(p);
    double s = 0.0;
    for (int i = 0; i < L; ++i) {
      const double d = static_cast<double>(a[i]) - b[i];
      s += d * d;
    }
    sum += s / L;
  }
  return std::sqrt(sum / idx.size());
}

double hsi_ssim(const HyperCube& pred, const HyperCube& gt, const Mask* omega) {
  const auto idx = selection(pred, gt, omega);
  const int L = gt.bands();
  const double C1 = 0.01 * 0.01;
  const double C2 = 0.03 * 0.03;
  const double n = static_cast<double>(idx.size());
  double total = 0.0;
  for (int b = 0; b < L; ++b) {
    double mx = 0.0, my = 0.0;
    for (std::size_t p : idx) {
      mx += pred.spectrum(p)[b];
      my += gt.spectrum(p)[b];
    }
    mx /= n;
    my /= n;
    double vx = 0.0, vy = 0.0, cxy = 0.0;
    for (std::size_t p : idx) {
      const double dx = pred.spectrum(p)[b] - mx;
      const double dy = gt.spectrum(p)[b] - my;
      vx += dx * dx;
      vy += dy * dy;
      cxy += dx * dy;
    }
    vx /= n;
    vy /= n;
    cxy /= n;
    total += ((2 * mx * my + C1) * (2 * cxy + C2)) / ((mx * mx + my * my + C1) * (vx + vy + C2));
  }
  return total / L;
}

double hsi_psnr(const HyperCube& pred, const HyperCube& gt, const Mask* omega, double delta) {
  if (!(delta > 0.0)) throw InvalidArgument("psnr: delta must be > 0");
  const auto idx = selection(pred, gt, omega);
  const int L = gt.bands();
  double total = 0.0;
  for (int b = 0; b < L; ++b) {
    double mse = 0.0;
    for (std::size_t p : idx) {
      const double d = static_cast<double>(pred.spectrum(p)[b]) - gt.spectrum(p)[b];
      mse += d * d;
    }
    mse /= idx.size();
    total += 10.0 * std::log10(1.0 / (mse + delta));
  }
  return total / L;
}

std::string to_string(MaskPolicy p) { return p == MaskPolicy::FullFrame ? "full-frame" : "foreground"; }

MaskPolicy mask_policy_from_string(const std::string& s) {
  if (s == "full-frame" || s == "full") return MaskPolicy::FullFrame;
  if (s == "foreground" || s == "fg") return MaskPolicy::Foreground;
  throw InvalidArgument("unknown mask policy: " + s);
}

SpectralMetrics evaluate_views(const std::vector<HyperCube>& preds, const std::vector<HyperCube>& gts,
                               const std::vector<const Mask*>& masks, const std::vector<int>& ids) {
  if (preds.size() != gts.size() || masks.size() != gts.size() || ids.size() != gts.size()) {
    throw InvalidArgument("evaluate_views: list sizes differ");
  }
  if (gts.empty()) throw InvalidArgument("evaluate_views: no views");
  SpectralMetrics m;
  m.n_views = static_cast<int>(gts.size());
  std::vector<double> s, r, ss, ps;
  for (std::size_t i = 0; i < gts.size(); ++i) {
    ViewMetrics v;
    v.view_id = ids[i];
    v.sam = sam(preds[i], gts[i], masks[i]);
    v.rmse = spectral_rmse(preds[i], gts[i], masks[i]);
    v.ssim = hsi_ssim(preds[i], gts[i], masks[i]);
    v.psnr = hsi_psnr(preds[i], gts[i], masks[i]);
    m.views.push_back(v);
    s.push_back(v.sam);
    r.push_back(v.rmse);
    ss.push_back(v.ssim);
    ps.push_back(v.psnr);
  }
  m.sam = mean_sd(s);
  m.rmse = mean_sd(r);
  m.ssim = mean_sd(ss);
  m.psnr = mean_sd(ps);
  m.rays_per_view = gts[0].pixel_count();
  return m;
}

Image8 side_by_side(const HyperCube& gt, const HyperCube& pred, const BandTriplet& triplet) {
  const Image8 a = composite(gt, triplet);
  const Image8 b = composite(pred, triplet);
  const int gap = 2;
  Image8 out(a.width + gap + b.width, std::max(a.height, b.height), 3, 255);
  for (int y = 0; y < a.height; ++y)
    for (int x = 0; x < a.width; ++x)
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = a.at(x, y, c);
  for (int y = 0; y < b.height; ++y)
    for (int x = 0; x < b.width; ++x)
      for (int c = 0; c < 3; ++c) out.at(a.width + gap + x, y, c) = b.at(x, y, c);
  return out;
}

SpectralMetrics evaluate_heldout(const FieldParams& params, const Dataset& ds, const EvalOptions& opts) {
  if (ds.eval_ids.empty()) throw InvalidArgument("evaluate_heldout: dataset has no held-out views");
  if (opts.policy == MaskPolicy::Foreground && !ds.has_masks()) {
    throw InvalidArgument("evaluate_heldout: foreground policy needs masks");
  }
  std::vector<HyperCube> preds, gts;
  std::vector<const Mask*> masks;
  for (int id : ds.eval_ids) {
    preds.push_back(render_view(params, ds.camera, ds.poses[id], ds.wavelengths, opts.render, opts.chunk).cube);
    gts.push_back(ds.views[id]);
    masks.push_back(opts.policy == MaskPolicy::Foreground ? &ds.masks[id] : nullptr);
  }
  SpectralMetrics m = evaluate_views(preds, gts, masks, ds.eval_ids);
  if (!opts.out_dir.empty()) {
    std::filesystem::create_directories(opts.out_dir);
    write_metrics_csv(opts.out_dir / "metrics.csv", opts.dataset_name, m);
    for (std::size_t i = 0; i < preds.size(); ++i) {
      char name[48];
      std::snprintf(name, sizeof(name), "compare_view_%03d.png", ds.eval_ids[i]);
      write_png(opts.out_dir / name, side_by_side(gts[i], preds[i], opts.triplet));
    }
  }
  return m;
}

void write_metrics_csv(const std::filesystem::path& path, const std::string& dataset, const SpectralMetrics& m) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write metrics file: " + path.string());
  out << "dataset,view_id,sam_rad,rmse,ssim,psnr_db\n";
  char buf[256];
  for (const auto& v : m.views) {
    std::snprintf(buf, sizeof(buf), "%s,%d,%.6f,%.6f,%.6f,%.4f\n", dataset.c_str(), v.view_id, v.sam, v.rmse, v.ssim,
                  v.psnr);
    out << buf;
  }
  std::snprintf(buf, sizeof(buf), "%s,mean,%.6f,%.6f,%.6f,%.4f\n", dataset.c_str(), m.sam.mean, m.rmse.mean,
                m.ssim.mean, m.psnr.mean);
  out << buf;
  std::snprintf(buf, sizeof(buf), "%s,sd,%.6f,%.6f,%.6f,%.4f\n", dataset.c_str(), m.sam.sd, m.rmse.sd, m.ssim.sd,
                m.psnr.sd);
  out << buf;
  out << dataset << ",rays_per_view," << m.rays_per_view << ",,,\n";
}

}  // namespace hsnerf
