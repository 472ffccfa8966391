#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace bevfuse::plot {

struct Image {
  int width = 0, height = 0;
  std::vector<std::uint8_t> rgb;  // row major, 3 bytes per pixel

  Image(int w, int h)
      : width(w), height(h),
        rgb(static_cast<std::size_t>(w) * h * 3, 255) {}

  void set(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    if (x < 0 || y < 0 || x >= width || y >= height) return;
    const std::size_t i = (static_cast<std::size_t>(y) * width + x) * 3;
    rgb[i] = r;
    rgb[i + 1] = g;
    rgb[i + 2] = b;
  }
};

// 8-bit RGB PNG via zlib-compressed IDAT, filter 0 scanlines.
void write_png(const Image& img, const std::string& path);

}  // namespace bevfuse::plot
