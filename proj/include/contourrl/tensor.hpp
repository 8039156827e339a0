#pragma once

#include <cstddef>
#include <cstdint>
#include <numeric>
#include <vector>

#include "contourrl/errors.hpp"

namespace crl {

// dense row-major float tensor; layout for images is NHWC
struct Tensor {
  std::vector<int> shape;
  std::vector<float> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    data.assign(numel_of(shape), 0.0f);
  }

  static size_t numel_of(const std::vector<int>& s) {
    size_t n = 1;
    for (int d : s) n *= static_cast<size_t>(d);
    return n;
  }

  size_t numel() const { return data.size(); }
  float* ptr() { return data.data(); }
  const float* ptr() const { return data.data(); }

  void reshape(std::vector<int> s) {
    if (numel_of(s) != data.size()) throw ShapeMismatch("reshape: element count changed");
    shape = std::move(s);
  }
};

}  // namespace crl
