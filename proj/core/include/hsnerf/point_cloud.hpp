#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "hsnerf/common.hpp"

namespace hsnerf {

// Points in meters with optional per-point spectra (row i holds the L
// reflectances of point i) and optional 8-bit colors.
struct PointCloud {
  std::vector<Vec3> points;
  std::vector<double> wavelengths;         // L, empty when there are no spectra
  std::vector<std::vector<float>> spectra;  // N x L or empty
  std::vector<std::array<std::uint8_t, 3>> colors;  // N or empty

  std::size_t size() const { return points.size(); }
  bool has_spectra() const { return !spectra.empty(); }
  void validate() const;
  PointCloud subset(const std::vector<std::size_t>& idx) const;
};

enum class PlyPayload { Spectra, Colors, Geometry };

// ASCII PLY. Spectral properties are named band_<i> and their wavelengths
// are stored as "comment wavelength <nm>" lines.
void write_ply(const std::filesystem::path& path, const PointCloud& pc, PlyPayload payload);
PointCloud read_ply(const std::filesystem::path& path);

// Uniform voxel grid over a fixed point set for exact nearest-neighbour
// queries. Shells of cells are visited outward until no unvisited cell can
// hold a closer point.
class GridIndex {
 public:
  explicit GridIndex(const std::vector<Vec3>& points, double cell = 0.0);

  // Index and distance of the nearest point.
  std::pair<std::size_t, double> nearest(const Vec3& q) const;
  // k nearest (ascending distance); `skip` excludes one index (the query
  // point itself when querying a cloud against itself).
  std::vector<std::pair<std::size_t, double>> knn(const Vec3& q, std::size_t k,
                                                  std::size_t skip = static_cast<std::size_t>(-1)) const;
  double cell_size() const { return cell_; }

 private:
  template <typename Visit>
  void visit_shell(const std::array<long, 3>& c, long r, Visit&& visit) const;
  std::array<long, 3> cell_of(const Vec3& p) const;

  const std::vector<Vec3>& pts_;
  Vec3 origin_;
  double cell_ = 1.0;
  std::array<long, 3> dims_{1, 1, 1};
  std::vector<std::uint32_t> start_;  // CSR offsets per cell
  std::vector<std::uint32_t> items_;
};

}  // namespace hsnerf
