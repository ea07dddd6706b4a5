#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace hsnerf {

// 8-bit interleaved raster, row-major, `channels` samples per pixel (1 or 3).
struct Image8 {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<std::uint8_t> pixels;

  Image8() = default;
  Image8(int w, int h, int c, std::uint8_t fill = 0)
      : width(w), height(h), channels(c),
        pixels(static_cast<std::size_t>(w) * h * c, fill) {}

  std::uint8_t& at(int x, int y, int c = 0) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t at(int x, int y, int c = 0) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
};

void write_png(const std::filesystem::path& path, const Image8& image);

// Reads any 8/16-bit PNG and converts to gray (channels=1) or RGB (channels=3).
Image8 read_png(const std::filesystem::path& path, int channels);

// Maps [0,1] to [0,255] with clipping and round-to-nearest.
std::uint8_t to_byte(double v);

}  // namespace hsnerf
