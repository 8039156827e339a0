#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "contourrl/geometry.hpp"

namespace crl {

// single-channel float image, intensities in [0, 1], row-major
struct GrayImage {
  int height = 0;
  int width = 0;
  std::vector<float> data;

  GrayImage() = default;
  GrayImage(int h, int w, float fill = 0.0f)
      : height(h), width(w), data(static_cast<size_t>(h) * w, fill) {}

  float& at(int r, int c) { return data[static_cast<size_t>(r) * width + c]; }
  float at(int r, int c) const { return data[static_cast<size_t>(r) * width + c]; }
  bool inside(int r, int c) const { return r >= 0 && r < height && c >= 0 && c < width; }
  bool inside(const Pixel& p) const { return inside(p.row, p.col); }
};

// 8-bit RGB image for overlay output
struct RgbImage {
  int height = 0;
  int width = 0;
  std::vector<uint8_t> data;  // 3 bytes per pixel, row-major

  RgbImage(int h, int w) : height(h), width(w), data(static_cast<size_t>(h) * w * 3, 0) {}

  void set(int r, int c, uint8_t red, uint8_t green, uint8_t blue) {
    size_t i = (static_cast<size_t>(r) * width + c) * 3;
    data[i] = red;
    data[i + 1] = green;
    data[i + 2] = blue;
  }
};

// binary PGM (P5, maxval 255).  Intensities are quantised to 8 bits on
// write; images produced by the synthesiser are already on that grid, so
// save/load round-trips them exactly.
void write_pgm(const std::string& path, const GrayImage& img);
GrayImage read_pgm(const std::string& path);

// binary PPM (P6) for overlays
void write_ppm(const std::string& path, const RgbImage& img);

}  // namespace crl
