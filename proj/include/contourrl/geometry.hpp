#pragma once

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <vector>

namespace crl {

// integer pixel coordinate, (row, col), row 0 = top
struct Pixel {
  int row = 0;
  int col = 0;

  bool operator==(const Pixel& o) const { return row == o.row && col == o.col; }
  bool operator!=(const Pixel& o) const { return !(*this == o); }
  bool operator<(const Pixel& o) const {
    return row != o.row ? row < o.row : col < o.col;
  }
};

inline int chebyshev(const Pixel& a, const Pixel& b) {
  return std::max(std::abs(a.row - b.row), std::abs(a.col - b.col));
}

inline double euclidean(const Pixel& a, const Pixel& b) {
  double dr = a.row - b.row;
  double dc = a.col - b.col;
  return std::sqrt(dr * dr + dc * dc);
}

// 8-adjacency; a pixel is not adjacent to itself
inline bool adjacent8(const Pixel& a, const Pixel& b) {
  return a != b && chebyshev(a, b) <= 1;
}

// ordered cyclic list of pixels describing a closed curve
struct Contour {
  std::vector<Pixel> points;

  int size() const { return static_cast<int>(points.size()); }
  const Pixel& operator[](int i) const { return points[i]; }
  Pixel& operator[](int i) { return points[i]; }
  // cyclic access
  const Pixel& at_mod(int i) const {
    int n = size();
    int m = i % n;
    if (m < 0) m += n;
    return points[m];
  }
};

}  // namespace crl
