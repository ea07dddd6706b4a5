#include "hsnerf/point_cloud.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace hsnerf {

void PointCloud::validate() const {
  for (const auto& p : points)
    if (!p.allFinite()) throw InvalidArgument("point cloud has non-finite coordinates");
  if (!spectra.empty()) {
    if (spectra.size() != points.size()) throw InvalidArgument("point cloud: spectra count differs from point count");
    for (const auto& s : spectra)
      if (s.size() != wavelengths.size()) throw InvalidArgument("point cloud: spectrum length differs from band count");
  }
  if (!colors.empty() && colors.size() != points.size()) throw InvalidArgument("point cloud: color count differs");
}

PointCloud PointCloud::subset(const std::vector<std::size_t>& idx) const {
  PointCloud out;
  out.wavelengths = wavelengths;
  for (std::size_t i : idx) {
    out.points.push_back(points[i]);
    if (!spectra.empty()) out.spectra.push_back(spectra[i]);
    if (!colors.empty()) out.colors.push_back(colors[i]);
  }
  return out;
}

void write_ply(const std::filesystem::path& path, const PointCloud& pc, PlyPayload payload) {
  pc.validate();
  if (payload == PlyPayload::Spectra && !pc.has_spectra()) throw InvalidArgument("write_ply: cloud has no spectra");
  if (payload == PlyPayload::Colors && pc.colors.empty()) throw InvalidArgument("write_ply: cloud has no colors");
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "ply\nformat ascii 1.0\n";
  if (payload == PlyPayload::Spectra) {
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (double nm : pc.wavelengths) out << "comment wavelength " << nm << "\n";
  }
  out << "element vertex " << pc.size() << "\n";
  out << "property double x\nproperty double y\nproperty double z\n";
  if (payload == PlyPayload::Spectra) {
    for (std::size_t b = 0; b < pc.wavelengths.size(); ++b) out << "property float band_" << b << "\n";
  } else if (payload == PlyPayload::Colors) {
    out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  }
  out << "end_header\n";
  for (std::size_t i = 0; i < pc.size(); ++i) {
    out << std::setprecision(std::numeric_limits<double>::max_digits10) << pc.points[i].x() << " " << pc.points[i].y()
        << " " << pc.points[i].z();
    if (payload == PlyPayload::Spectra) {
      out << std::setprecision(std::numeric_limits<float>::max_digits10);
      for (float v : pc.spectra[i]) out << " " << v;
    } else if (payload == PlyPayload::Colors) {
      for (auto c : pc.colors[i]) out << " " << static_cast<int>(c);
    }
    out << "\n";
  }
  if (!out) throw IoError("failed writing " + path.string());
}

PointCloud read_ply(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "ply") throw IoError(path.string() + ": not a PLY file");
  PointCloud pc;
  std::size_t n = 0;
  std::vector<std::string> props;
  bool ascii = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "end_header") break;
    if (key == "format") {
      std::string fmt;
      ls >> fmt;
      ascii = fmt == "ascii";
    } else if (key == "comment") {
      std::string what;
      double nm;
      if (ls >> what >> nm && what == "wavelength") pc.wavelengths.push_back(nm);
    } else if (key == "element") {
      std::string name;
      ls >> name >> n;
      if (name != "vertex") throw IoError(path.string() + ": only vertex elements are supported");
    } else if (key == "property") {
      std::string type, name;
      ls >> type >> name;
      props.push_back(name);
    }
  }
  if (!ascii) throw IoError(path.string() + ": only ASCII PLY is supported");
  if (props.size() < 3 || props[0] != "x" || props[1] != "y" || props[2] != "z") {
    throw IoError(path.string() + ": expected x y z as the first properties");
  }
  const std::size_t extra = props.size() - 3;
  const bool colors = extra == 3 && props[3] == "red";
  const bool spectra = extra > 0 && !colors;
  if (spectra && pc.wavelengths.size() != extra) {
    // No wavelength comments: fall back to band indices.
    pc.wavelengths.clear();
    for (std::size_t b = 0; b < extra; ++b) pc.wavelengths.push_back(static_cast<double>(b));
  }
  if (!spectra) pc.wavelengths.clear();
  pc.points.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    double x, y, z;
    if (!(in >> x >> y >> z)) throw IoError(path.string() + ": truncated vertex list");
    pc.points.emplace_back(x, y, z);
    if (spectra) {
      std::vector<float> s(extra);
      for (auto& v : s)
        if (!(in >> v)) throw IoError(path.string() + ": truncated spectra");
      pc.spectra.push_back(std::move(s));
    } else if (colors) {
      std::array<std::uint8_t, 3> c{};
      for (auto& v : c) {
        int t;
        if (!(in >> t) || t < 0 || t > 255) throw IoError(path.string() + ": bad color value");
        v = static_cast<std::uint8_t>(t);
      }
      pc.colors.push_back(c);
    } else {
      double skip;
      for (std::size_t k = 0; k < extra; ++k) in >> skip;
    }
  }
  pc.validate();
  return pc;
}

GridIndex::GridIndex(const std::vector<Vec3>& points, double cell) : pts_(points) {
  if (points.empty()) throw InvalidArgument("GridIndex: empty point set");
  if (points.size() >= std::numeric_limits<std::uint32_t>::max()) throw InvalidArgument("GridIndex: too many points");
  Vec3 lo = points[0], hi = points[0];
  for (const auto& p : points) {
    if (!p.allFinite()) throw InvalidArgument("GridIndex: non-finite point");
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const Vec3 ext = (hi - lo).cwiseMax(1e-9);
  if (!(cell > 0.0)) {
    // About two points per cell on a surface-like set.
    const double vol = ext.prod();
    cell = std::cbrt(vol / static_cast<double>(points.size())) * 1.5;
    cell = std::max(cell, ext.maxCoeff() / 512.0);
  }
  // Keep the dense table bounded.
  while (true) {
    long total = 1;
    for (int a = 0; a < 3; ++a) total *= static_cast<long>(std::floor(ext[a] / cell)) + 1;
    if (total <= (1L << 24)) break;
    cell *= 1.5;
  }
  cell_ = cell;
  origin_ = lo;
  for (int a = 0; a < 3; ++a) dims_[a] = static_cast<long>(std::floor(ext[a] / cell_)) + 1;
  const std::size_t n_cells = static_cast<std::size_t>(dims_[0] * dims_[1] * dims_[2]);
  start_.assign(n_cells + 1, 0);
  std::vector<std::uint32_t> cell_id(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto c = cell_of(points[i]);
    cell_id[i] = static_cast<std::uint32_t>((c[2] * dims_[1] + c[1]) * dims_[0] + c[0]);
    ++start_[cell_id[i] + 1];
  }
  for (std::size_t c = 0; c < n_cells; ++c) start_[c + 1] += start_[c];
  items_.resize(points.size());
  std::vector<std::uint32_t> fill(start_.begin(), start_.end() - 1);
  for (std::size_t i = 0; i < points.size(); ++i) items_[fill[cell_id[i]]++] = static_cast<std::uint32_t>(i);
}

std::array<long, 3> GridIndex::cell_of(const Vec3& p) const {
  std::array<long, 3> c{};
  for (int a = 0; a < 3; ++a) {
    const double f = std::floor((p[a] - origin_[a]) / cell_);
    c[a] = static_cast<long>(std::clamp(f, 0.0, static_cast<double>(dims_[a] - 1)));
  }
  return c;
}

template <typename Visit>
void GridIndex::visit_shell(const std::array<long, 3>& c, long r, Visit&& visit) const {
  for (long z = c[2] - r; z <= c[2] + r; ++z) {
    if (z < 0 || z >= dims_[2]) continue;
    for (long y = c[1] - r; y <= c[1] + r; ++y) {
      if (y < 0 || y >= dims_[1]) continue;
      const bool face = z == c[2] - r || z == c[2] + r || y == c[1] - r || y == c[1] + r;
      for (long x = c[0] - r; x <= c[0] + r; x += (face || r == 0) ? 1 : 2 * r) {
        if (x < 0 || x >= dims_[0]) continue;
        const std::size_t id = static_cast<std::size_t>((z * dims_[1] + y) * dims_[0] + x);
        for (std::uint32_t k = start_[id]; k < start_[id + 1]; ++k) visit(items_[k]);
        if (r == 0) break;
      }
    }
  }
}

std::pair<std::size_t, double> GridIndex::nearest(const Vec3& q) const {
  const auto nn = knn(q, 1);
  return nn.front();
}

std::vector<std::pair<std::size_t, double>> GridIndex::knn(const Vec3& q, std::size_t k, std::size_t skip) const {
  const std::size_t available = pts_.size() - (skip < pts_.size() ? 1 : 0);
  if (k == 0 || k > available) throw InvalidArgument("knn: k must be in [1, number of candidate points]");
  // Anything outside the (2r+1)^3 block around q's cell is at least
  // r * cell plus q's clearance inside its own cell away. Queries outside the
  // grid are clamped to a border cell; their clearance counts as zero.
  const auto c = cell_of(q);
  Vec3 lo_cell, hi_cell;
  for (int a = 0; a < 3; ++a) {
    lo_cell[a] = origin_[a] + c[a] * cell_;
    hi_cell[a] = lo_cell[a] + cell_;
  }
  const double inner = std::min((q - lo_cell).cwiseMax(0.0).minCoeff(), (hi_cell - q).cwiseMax(0.0).minCoeff());
  const long max_r = std::max({dims_[0], dims_[1], dims_[2]});

  std::vector<std::pair<double, std::size_t>> best;  // max-heap on distance
  auto cmp = [](const auto& a, const auto& b) { return a.first < b.first || (a.first == b.first && a.second < b.second); };
  auto visit = [&](std::uint32_t i) {
    if (i == skip) return;
    const double d = (pts_[i] - q).norm();
    const std::pair<double, std::size_t> e{d, i};
    if (best.size() < k) {
      best.push_back(e);
      std::push_heap(best.begin(), best.end(), cmp);
    } else if (cmp(e, best.front())) {
      std::pop_heap(best.begin(), best.end(), cmp);
      best.back() = e;
      std::push_heap(best.begin(), best.end(), cmp);
    }
  };
  for (long r = 0; r <= max_r; ++r) {
    visit_shell(c, r, visit);
    if (best.size() == k) {
      // Any unvisited point is at least this far away.
      const double bound = r * cell_ + inner;
      if (best.front().first <= bound) break;
    }
  }
  std::sort(best.begin(), best.end(), cmp);
  std::vector<std::pair<std::size_t, double>> out;
  out.reserve(best.size());
  for (const auto& [d, i] : best) out.emplace_back(i, d);
  return out;
}

}  // namespace hsnerf
