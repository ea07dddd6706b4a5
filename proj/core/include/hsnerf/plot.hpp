#pragma once

#include <array>
#include <filesystem>
#include <vector>

#include "hsnerf/image_io.hpp"

namespace hsnerf {

// Minimal raster line plot: frame, tick marks, polylines and dashed vertical
// markers. No text rendering; series are distinguished by color.
class LinePlot {
 public:
  using Color = std::array<std::uint8_t, 3>;

  LinePlot(int width, int height, double x_min, double x_max, double y_min, double y_max);

  void add_series(const std::vector<double>& xs, const std::vector<double>& ys, Color color);
  void add_vertical_marker(double x, Color color, bool dashed = true);

  Image8 render() const;
  void save(const std::filesystem::path& path) const;

 private:
  struct Series {
    std::vector<double> xs, ys;
    Color color;
  };
  struct Marker {
    double x;
    Color color;
    bool dashed;
  };

  int width_, height_;
  double x_min_, x_max_, y_min_, y_max_;
  std::vector<Series> series_;
  std::vector<Marker> markers_;
};

}  // namespace hsnerf
