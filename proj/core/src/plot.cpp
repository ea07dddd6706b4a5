#include "hsnerf/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "hsnerf/common.hpp"

namespace hsnerf {
namespace {

constexpr int kMargin = 24;

void put(Image8& img, int x, int y, const LinePlot::Color& c) {
  if (x < 0 || y < 0 || x >= img.width || y >= img.height) return;
  for (int k = 0; k < 3; ++k) img.at(x, y, k) = c[k];
}

void line(Image8& img, int x0, int y0, int x1, int y1, const LinePlot::Color& c) {
  const int dx = std::abs(x1 - x0);
  const int dy = -std::abs(y1 - y0);
  const int sx = x0 < x1 ? 1 : -1;
  const int sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  while (true) {
    put(img, x0, y0, c);
    put(img, x0, y0 + 1, c);
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

}  // namespace

LinePlot::LinePlot(int width, int height, double x_min, double x_max, double y_min, double y_max)
    : width_(width), height_(height), x_min_(x_min), x_max_(x_max), y_min_(y_min), y_max_(y_max) {
  if (width <= 2 * kMargin || height <= 2 * kMargin) throw InvalidArgument("LinePlot: canvas too small");
  if (!(x_max > x_min) || !(y_max > y_min)) throw InvalidArgument("LinePlot: empty axis range");
}

void LinePlot::add_series(const std::vector<double>& xs, const std::vector<double>& ys, Color color) {
  if (xs.size() != ys.size()) throw InvalidArgument("LinePlot: series length mismatch");
  series_.push_back({xs, ys, color});
}

void LinePlot::add_vertical_marker(double x, Color color, bool dashed) {
  markers_.push_back({x, color, dashed});
}

Image8 LinePlot::render() const {
  Image8 img(width_, height_, 3, 255);
  const int left = kMargin;
  const int right = width_ - kMargin;
  const int top = kMargin;
  const int bottom = height_ - kMargin;
  auto px = [&](double x) {
    return left + static_cast<int>(std::lround((x - x_min_) / (x_max_ - x_min_) * (right - left)));
  };
  auto py = [&](double y) {
    return bottom - static_cast<int>(std::lround((y - y_min_) / (y_max_ - y_min_) * (bottom - top)));
  };

  const Color axis{0, 0, 0};
  const Color grid{225, 225, 225};
  for (int i = 1; i < 10; ++i) {
    const int gx = left + (right - left) * i / 10;
    const int gy = top + (bottom - top) * i / 10;
    line(img, gx, top, gx, bottom, grid);
    line(img, left, gy, right, gy, grid);
  }
  line(img, left, bottom, right, bottom, axis);
  line(img, left, top, left, bottom, axis);
  line(img, right, top, right, bottom, axis);
  line(img, left, top, right, top, axis);
  for (int i = 0; i <= 10; ++i) {
    const int gx = left + (right - left) * i / 10;
    const int gy = top + (bottom - top) * i / 10;
    line(img, gx, bottom, gx, bottom + 4, axis);
    line(img, left - 4, gy, left, gy, axis);
  }

  for (const auto& m : markers_) {
    const int x = px(m.x);
    for (int y = top; y <= bottom; ++y) {
      if (!m.dashed || ((y - top) / 6) % 2 == 0) {
        put(img, x, y, m.color);
        put(img, x + 1, y, m.color);
      }
    }
  }
  for (const auto& s : series_) {
    for (std::size_t i = 1; i < s.xs.size(); ++i) {
      line(img, px(s.xs[i - 1]), py(s.ys[i - 1]), px(s.xs[i]), py(s.ys[i]), s.color);
    }
    for (std::size_t i = 0; i < s.xs.size(); ++i) {
      const int cx = px(s.xs[i]);
      const int cy = py(s.ys[i]);
      for (int dy = -2; dy <= 2; ++dy)
        for (int dx = -2; dx <= 2; ++dx) put(img, cx + dx, cy + dy, s.color);
    }
  }
  return img;
}

void LinePlot::save(const std::filesystem::path& path) const { write_png(path, render()); }

}  // namespace hsnerf
