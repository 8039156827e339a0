#pragma once

#include <filesystem>
#include <string>

#include "contourrl/image.hpp"
#include "contourrl/random.hpp"

namespace crl::test {

// unique scratch directory removed on scope exit
struct TempDir {
  std::filesystem::path path;

  TempDir() {
    auto base = std::filesystem::temp_directory_path();
    for (int i = 0;; ++i) {
      auto candidate = base / ("crl_test_" + std::to_string(::getpid()) + "_" + std::to_string(i));
      std::error_code ec;
      if (std::filesystem::create_directory(candidate, ec)) {
        path = candidate;
        return;
      }
    }
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path / name).string(); }
};

// random image with every intensity on the 8-bit grid, like synthesised ones
inline GrayImage random_quantized_image(int h, int w, uint64_t seed) {
  Rng rng(seed);
  GrayImage img(h, w);
  for (float& v : img.data) v = static_cast<float>(rng.uniform_int(0, 255)) / 255.0f;
  return img;
}

}  // namespace crl::test
