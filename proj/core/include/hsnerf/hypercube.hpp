#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "hsnerf/common.hpp"
#include "hsnerf/image_io.hpp"

namespace hsnerf {

enum class CubeKind { Raw, Calibrated };

// Boolean raster aligned with a cube's spatial grid. Row-major, one byte per
// pixel (0 or 1).
class Mask {
 public:
  Mask() = default;
  Mask(int height, int width, bool fill = false);

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return values_.size(); }

  bool operator()(int y, int x) const { return values_[index(y, x)] != 0; }
  void set(int y, int x, bool v) { values_[index(y, x)] = v ? 1 : 0; }
  bool at(std::size_t i) const { return values_[i] != 0; }
  void set(std::size_t i, bool v) { values_[i] = v ? 1 : 0; }

  std::size_t count() const;
  bool empty_selection() const { return count() == 0; }
  std::span<const std::uint8_t> values() const { return values_; }

  bool operator==(const Mask&) const = default;

  static Mask from_png(const std::filesystem::path& path);
  void write_png(const std::filesystem::path& path) const;

 private:
  std::size_t index(int y, int x) const { return static_cast<std::size_t>(y) * width_ + x; }
  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> values_;
};

// H x W x L spectral volume stored band-last: data[(y*W + x)*L + b].
//
// Construction validates the wavelength grid and value ranges, and the
// object is treated as immutable afterwards except through the explicit
// mutable accessors used by producers.
class HyperCube {
 public:
  HyperCube() = default;
  HyperCube(int height, int width, std::vector<double> wavelengths_nm,
            std::vector<float> data, CubeKind kind);
  // Zero-filled cube.
  HyperCube(int height, int width, std::vector<double> wavelengths_nm, CubeKind kind);

  int height() const { return height_; }
  int width() const { return width_; }
  int bands() const { return static_cast<int>(wavelengths_.size()); }
  std::size_t pixel_count() const { return static_cast<std::size_t>(height_) * width_; }
  CubeKind kind() const { return kind_; }
  const std::vector<double>& wavelengths() const { return wavelengths_; }
  std::span<const float> data() const { return data_; }
  std::span<float> mutable_data() { return data_; }

  float operator()(int y, int x, int b) const { return data_[offset(y, x) + b]; }
  float& operator()(int y, int x, int b) { return data_[offset(y, x) + b]; }

  std::span<const float> spectrum(int y, int x) const {
    return {data_.data() + offset(y, x), static_cast<std::size_t>(bands())};
  }
  std::span<const float> spectrum(std::size_t pixel) const {
    return {data_.data() + pixel * bands(), static_cast<std::size_t>(bands())};
  }

  // Re-checks the type invariants (range per kind, finiteness).
  void validate() const;

  bool operator==(const HyperCube&) const = default;

 private:
  std::size_t offset(int y, int x) const {
    return (static_cast<std::size_t>(y) * width_ + x) * wavelengths_.size();
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<double> wavelengths_;
  std::vector<float> data_;
  CubeKind kind_ = CubeKind::Raw;
};

struct BandTriplet {
  double r_nm = 0.0;
  double g_nm = 0.0;
  double b_nm = 0.0;
};

// Single-band raster, row-major.
struct BandImage {
  int height = 0;
  int width = 0;
  std::vector<float> values;
};

// Reads a float32 little-endian band-interleaved-by-line cube described by
// an ENVI-style "key = value" header.
HyperCube read_bil(const std::filesystem::path& header_path, const std::filesystem::path& data_path);
void write_bil(const HyperCube& cube, const std::filesystem::path& header_path,
               const std::filesystem::path& data_path);

// Index of the band nearest to nm; ties resolve to the lower index.
int nearest_band(std::span<const double> wavelengths, double nm);
BandImage band_slice(const HyperCube& cube, double nm);

// Three nearest-band slices stacked into an RGB raster with values clipped to [0,1].
Image8 composite(const HyperCube& cube, const BandTriplet& triplet);
// Floating-point version of composite (H*W*3, row-major, clipped).
std::vector<float> composite_values(const HyperCube& cube, const BandTriplet& triplet);

std::vector<double> roi_mean_spectrum(const HyperCube& cube, const Mask& mask);

// Two-column CSV: wavelength_nm,reflectance.
void write_spectrum_csv(const std::filesystem::path& path, std::span<const double> wavelengths,
                        std::span<const double> values);

}  // namespace hsnerf
