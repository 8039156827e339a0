#pragma once

#include <functional>
#include <string>
#include <vector>

#include "contourrl/geometry.hpp"
#include "contourrl/image.hpp"

namespace crl {

// All contours in this library are closed, 8-connected, duplicate-free
// cyclic pixel sequences ordered counter-clockwise in image coordinates
// (row down, col right).

// discrete line from a to b, endpoints excluded.  For points on adjacent
// (or equal) rows the fill walks along the source row and steps to the
// target row last; same for adjacent columns; otherwise standard Bresenham.
std::vector<Pixel> line_between(const Pixel& a, const Pixel& b);

// twice the signed area of the closed polygon through the points, positive
// for counter-clockwise order in a y-up frame; computed exactly in integers
long long signed_area_twice(const std::vector<Pixel>& points);

// true if consecutive points (cyclically) are all 8-adjacent
bool is_closed_eight_connected(const std::vector<Pixel>& points);

// removes consecutive duplicates, fills gaps between consecutive points
// (including last->first) with line_between, errors on degenerate input
Contour refine_contour(const std::vector<Pixel>& points);

// reverses point order if the contour is clockwise; keeps points[0] first
Contour ensure_ccw(Contour c);

// traces the outer boundary of the region {p : object(p)} starting from its
// topmost-leftmost pixel (Moore neighbourhood, 8-connected object).
// `object` must be false outside [0,h) x [0,w).
std::vector<Pixel> trace_boundary(int h, int w, const std::function<bool(int, int)>& object,
                                  Pixel start);

// extracts the single one-pixel-thick ring of 1-valued pixels from a binary
// mask.  Errors: EmptyMask, OpenCurve (the walk revisits a pixel or fails
// to close), MultipleComponents (mask pixels left unvisited).
Contour extract_contour(const GrayImage& mask);

// paints the contour points as 1s into an h x w binary mask
GrayImage rasterize_contour(const Contour& c, int h, int w);

// cyclic "row,col" CSV, one point per line, first point not repeated
void write_contour_csv(const std::string& path, const Contour& c);
Contour read_contour_csv(const std::string& path);

}  // namespace crl
