#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hsnerf/hypercube.hpp"
#include "hsnerf/point_cloud.hpp"
#include "hsnerf/radiance_field.hpp"

namespace hsnerf {

// How radiance is queried for a point's spectrum: mean over the six
// axis-aligned directions, or a single fixed direction.
enum class ProbePolicy { SixAxis, Single };
std::string to_string(ProbePolicy p);
ProbePolicy probe_policy_from_string(const std::string& s);

struct ExtractConfig {
  int resolution = 128;  // voxels per axis
  double sigma_min = 5.0;  // raw field density units
  ProbePolicy probe = ProbePolicy::SixAxis;
  Vec3 probe_direction = Vec3(0.0, 0.0, -1.0);  // Single policy only
  std::optional<Aabb> bounds;  // defaults to the field's bounds
  // Keep only occupied voxels with at least one unoccupied face neighbour
  // (the outer shell), instead of the whole occupied volume.
  bool surface_only = false;
  std::size_t chunk = 4096;

  void validate() const;
};

struct DensityGrid {
  int resolution = 0;
  Aabb bounds;
  std::vector<float> density;  // x fastest, then y, then z
  Vec3 center(int i, int j, int k) const;
};

DensityGrid evaluate_density_grid(const FieldParams& params, const ExtractConfig& cfg);

// Log-spaced histogram of a density grid as text, used in error reports.
std::string density_histogram(const DensityGrid& grid, int bins = 12);

// Voxel centers with density >= sigma_min plus their probed spectra.
// `wavelengths` labels the field channels; pass empty to use band indices.
// Throws NumericError (with the histogram) when nothing passes the threshold.
PointCloud extract_pointcloud(const FieldParams& params, const ExtractConfig& cfg,
                              const std::vector<double>& wavelengths = {});

// Statistical outlier removal: drops points whose mean distance to their k
// nearest neighbours exceeds mean + std_ratio * sd of that statistic.
struct RefineResult {
  PointCloud cloud;
  std::vector<std::size_t> kept;  // indices into the input
  double threshold = 0.0;
};
RefineResult refine_pointcloud(const PointCloud& pc, int k = 16, double std_ratio = 2.0);

// Fills pc.colors from the nearest bands to the triplet, clipped to [0,1].
void color_by_triplet(PointCloud& pc, const BandTriplet& triplet);

}  // namespace hsnerf
