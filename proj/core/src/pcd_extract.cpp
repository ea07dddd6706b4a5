#include "hsnerf/pcd_extract.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "hsnerf/parallel.hpp"

namespace hsnerf {

std::string to_string(ProbePolicy p) { return p == ProbePolicy::SixAxis ? "six-axis" : "single"; }

ProbePolicy probe_policy_from_string(const std::string& s) {
  if (s == "six-axis") return ProbePolicy::SixAxis;
  if (s == "single") return ProbePolicy::Single;
  throw InvalidArgument("unknown probe policy '" + s + "' (expected six-axis or single)");
}

void ExtractConfig::validate() const {
  if (resolution < 2) throw InvalidArgument("extract: resolution must be >= 2");
  if (resolution > 1024) throw InvalidArgument("extract: resolution above 1024 is not supported");
  if (!(sigma_min > 0.0)) throw InvalidArgument("extract: sigma_min must be > 0");
  if (chunk == 0) throw InvalidArgument("extract: chunk must be > 0");
  if (probe == ProbePolicy::Single && std::abs(probe_direction.norm() - 1.0) > 1e-6)
    throw InvalidArgument("extract: probe direction must be a unit vector");
  if (bounds && !((bounds->max.array() > bounds->min.array()).all()))
    throw InvalidArgument("extract: bounds must have positive extent");
}

Vec3 DensityGrid::center(int i, int j, int k) const {
  const Vec3 step = (bounds.max - bounds.min) / static_cast<double>(resolution);
  return bounds.min + Vec3((i + 0.5) * step.x(), (j + 0.5) * step.y(), (k + 0.5) * step.z());
}

DensityGrid evaluate_density_grid(const FieldParams& params, const ExtractConfig& cfg) {
  cfg.validate();
  params.config.validate();
  DensityGrid grid;
  grid.resolution = cfg.resolution;
  grid.bounds = cfg.bounds.value_or(params.config.bounds);
  const std::size_t res = static_cast<std::size_t>(cfg.resolution);
  const std::size_t total = res * res * res;
  grid.density.resize(total);
  const FieldEvaluator<float> field(params);
  const std::size_t n_chunks = (total + cfg.chunk - 1) / cfg.chunk;
  parallel_for(n_chunks, [&](std::size_t c) {
    const std::size_t begin = c * cfg.chunk;
    const std::size_t end = std::min(total, begin + cfg.chunk);
    MatX<float> pos(3, static_cast<Eigen::Index>(end - begin));
    for (std::size_t v = begin; v < end; ++v) {
      const int i = static_cast<int>(v % res), j = static_cast<int>((v / res) % res), k = static_cast<int>(v / (res * res));
      pos.col(static_cast<Eigen::Index>(v - begin)) = grid.center(i, j, k).cast<float>();
    }
    typename FieldEvaluator<float>::Workspace ws;
    field.forward(pos, nullptr, {false, false}, ws);
    for (std::size_t v = begin; v < end; ++v) grid.density[v] = ws.density(0, static_cast<Eigen::Index>(v - begin));
  });
  return grid;
}

std::string density_histogram(const DensityGrid& grid, int bins) {
  if (grid.density.empty()) return "(empty grid)";
  const float mx = *std::max_element(grid.density.begin(), grid.density.end());
  std::ostringstream os;
  os << "density histogram over " << grid.density.size() << " voxels (max " << mx << "):\n";
  // Decades from 1e-3 upward, plus one bucket for anything smaller.
  std::vector<std::size_t> counts(static_cast<std::size_t>(bins) + 1, 0);
  for (float d : grid.density) {
    int b = 0;
    if (d >= 1e-3f) b = 1 + std::min(bins - 1, static_cast<int>(std::floor(std::log10(d) + 3.0)));
    ++counts[static_cast<std::size_t>(b)];
  }
  os << "  [0, 1e-3): " << counts[0] << "\n";
  for (int b = 1; b <= bins; ++b) {
    const int lo = b - 4;
    os << "  [1e" << lo << ", " << (b == bins ? std::string("inf") : "1e" + std::to_string(lo + 1))
       << "): " << counts[static_cast<std::size_t>(b)] << "\n";
  }
  return os.str();
}

PointCloud extract_pointcloud(const FieldParams& params, const ExtractConfig& cfg,
                              const std::vector<double>& wavelengths) {
  const int nc = params.config.n_channels;
  if (!wavelengths.empty() && static_cast<int>(wavelengths.size()) != nc)
    throw InvalidArgument("extract: wavelength count does not match field channels");
  const DensityGrid grid = evaluate_density_grid(params, cfg);
  const int res = grid.resolution;
  auto idx = [res](int i, int j, int k) {
    return static_cast<std::size_t>(i) + static_cast<std::size_t>(res) * (j + static_cast<std::size_t>(res) * k);
  };
  const auto sigma_min = static_cast<float>(cfg.sigma_min);
  auto occupied = [&](int i, int j, int k) {
    if (i < 0 || j < 0 || k < 0 || i >= res || j >= res || k >= res) return false;
    return grid.density[idx(i, j, k)] >= sigma_min;
  };

  PointCloud pc;
  for (int k = 0; k < res; ++k)
    for (int j = 0; j < res; ++j)
      for (int i = 0; i < res; ++i) {
        if (!occupied(i, j, k)) continue;
        if (cfg.surface_only && occupied(i - 1, j, k) && occupied(i + 1, j, k) && occupied(i, j - 1, k) &&
            occupied(i, j + 1, k) && occupied(i, j, k - 1) && occupied(i, j, k + 1))
          continue;
        pc.points.push_back(grid.center(i, j, k));
      }
  if (pc.points.empty()) {
    std::ostringstream os;
    os << "extract: no voxel reaches sigma_min = " << cfg.sigma_min << "\n" << density_histogram(grid);
    throw NumericError(os.str());
  }

  if (wavelengths.empty()) {
    for (int b = 0; b < nc; ++b) pc.wavelengths.push_back(b);
  } else {
    pc.wavelengths = wavelengths;
  }

  std::vector<Vec3> dirs;
  if (cfg.probe == ProbePolicy::SixAxis) {
    for (int a = 0; a < 3; ++a)
      for (double s : {1.0, -1.0}) {
        Vec3 d = Vec3::Zero();
        d[a] = s;
        dirs.push_back(d);
      }
  } else {
    dirs.push_back(cfg.probe_direction);
  }

  const FieldEvaluator<float> field(params);
  const std::size_t n = pc.points.size();
  pc.spectra.assign(n, std::vector<float>(static_cast<std::size_t>(nc), 0.0f));
  const std::size_t n_chunks = (n + cfg.chunk - 1) / cfg.chunk;
  parallel_for(n_chunks, [&](std::size_t c) {
    const std::size_t begin = c * cfg.chunk;
    const std::size_t end = std::min(n, begin + cfg.chunk);
    const auto m = static_cast<Eigen::Index>(end - begin);
    MatX<float> pos(3, m), dir(3, m);
    for (std::size_t p = begin; p < end; ++p) pos.col(static_cast<Eigen::Index>(p - begin)) = pc.points[p].cast<float>();
    MatX<float> acc = MatX<float>::Zero(nc, m);
    typename FieldEvaluator<float>::Workspace ws;
    for (const auto& d : dirs) {
      dir.colwise() = d.cast<float>();
      field.forward(pos, &dir, {true, false}, ws);
      acc += ws.rgb;
    }
    acc /= static_cast<float>(dirs.size());
    for (std::size_t p = begin; p < end; ++p)
      for (int b = 0; b < nc; ++b)
        pc.spectra[p][static_cast<std::size_t>(b)] =
            std::clamp(acc(b, static_cast<Eigen::Index>(p - begin)), 0.0f, 1.0f);
  });
  return pc;
}

RefineResult refine_pointcloud(const PointCloud& pc, int k, double std_ratio) {
  if (k < 1) throw InvalidArgument("refine: k must be >= 1");
  if (!(std_ratio >= 0.0)) throw InvalidArgument("refine: std_ratio must be >= 0");
  if (pc.size() < static_cast<std::size_t>(k) + 1)
    throw InvalidArgument("refine: cloud has " + std::to_string(pc.size()) + " points, need at least k+1 = " +
                          std::to_string(k + 1));
  const GridIndex index(pc.points);
  std::vector<double> stat(pc.size());
  parallel_for(pc.size(), [&](std::size_t i) {
    const auto nn = index.knn(pc.points[i], static_cast<std::size_t>(k), i);
    double s = 0.0;
    for (const auto& e : nn) s += e.second;
    stat[i] = s / k;
  });
  double mean = 0.0;
  for (double s : stat) mean += s;
  mean /= static_cast<double>(stat.size());
  double var = 0.0;
  for (double s : stat) var += (s - mean) * (s - mean);
  const double sd = std::sqrt(var / static_cast<double>(stat.size()));
  RefineResult out;
  // Small relative slack so round-off on an exactly uniform cloud never
  // drops points.
  out.threshold = mean + std_ratio * sd + 1e-9 * mean;
  for (std::size_t i = 0; i < stat.size(); ++i)
    if (stat[i] <= out.threshold) out.kept.push_back(i);
  out.cloud = pc.subset(out.kept);
  return out;
}

void color_by_triplet(PointCloud& pc, const BandTriplet& triplet) {
  if (!pc.has_spectra()) throw InvalidArgument("color_by_triplet: cloud has no spectra");
  const int bands[3] = {nearest_band(pc.wavelengths, triplet.r_nm), nearest_band(pc.wavelengths, triplet.g_nm),
                        nearest_band(pc.wavelengths, triplet.b_nm)};
  pc.colors.resize(pc.size());
  for (std::size_t i = 0; i < pc.size(); ++i)
    for (int c = 0; c < 3; ++c) {
      const float v = std::clamp(pc.spectra[i][static_cast<std::size_t>(bands[c])], 0.0f, 1.0f);
      pc.colors[i][static_cast<std::size_t>(c)] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
    }
}

}  // namespace hsnerf
