#include "contourrl/synth.hpp"

#include <cmath>
#include <set>
#include <vector>

#include "contourrl/errors.hpp"
#include "contourrl/random.hpp"

namespace crl {

namespace {

// box blur with windows truncated at the image border, separable
GrayImage box_blur(const GrayImage& src, int radius) {
  if (radius <= 0) return src;
  GrayImage tmp(src.height, src.width);
  for (int r = 0; r < src.height; ++r) {
    for (int c = 0; c < src.width; ++c) {
      int lo = std::max(0, c - radius), hi = std::min(src.width - 1, c + radius);
      float s = 0.0f;
      for (int k = lo; k <= hi; ++k) s += src.at(r, k);
      tmp.at(r, c) = s / (hi - lo + 1);
    }
  }
  GrayImage out(src.height, src.width);
  for (int r = 0; r < src.height; ++r) {
    for (int c = 0; c < src.width; ++c) {
      int lo = std::max(0, r - radius), hi = std::min(src.height - 1, r + radius);
      float s = 0.0f;
      for (int k = lo; k <= hi; ++k) s += tmp.at(k, c);
      out.at(r, c) = s / (hi - lo + 1);
    }
  }
  return out;
}

}  // namespace

Sample synth_sample(const SynthParams& params, int height, int width) {
  Rng rng(params.seed);

  // radius profile r(theta) = r0 * (1 + sum_k a_k * sin(k*theta + phi_k));
  // each |a_k| <= max_amplitude / harmonic_count keeps the sum bounded and
  // the radius strictly positive
  int K = params.harmonic_count;
  std::vector<double> amp(K), phase(K);
  for (int k = 0; k < K; ++k) amp[k] = rng.uniform(-params.max_amplitude / K, params.max_amplitude / K);
  for (int k = 0; k < K; ++k) phase[k] = rng.uniform(0.0, 2.0 * M_PI);

  double r0 = params.base_radius;
  double rmax = r0 * (1.0 + params.max_amplitude);
  int reach = static_cast<int>(std::ceil(rmax));
  const int margin = 2;

  // anchor the blob so its boundary falls in the upper-right part of the
  // image (clamped toward the centre when the image is small)
  int row_lo = reach + margin, row_hi = height - 1 - reach - margin;
  int col_lo = reach + margin, col_hi = width - 1 - reach - margin;
  if (row_lo > row_hi || col_lo > col_hi)
    throw GeometryOverflow("synth_sample: blob radius too large for image");
  int crow = std::min(row_hi, std::max(row_lo, 52));
  int ccol = std::min(col_hi, std::max(col_lo, width - 44));
  crow += static_cast<int>(rng.uniform_int(-params.center_jitter, params.center_jitter));
  ccol += static_cast<int>(rng.uniform_int(-params.center_jitter, params.center_jitter));
  if (crow < row_lo || crow > row_hi || col_lo > ccol || ccol > col_hi)
    throw GeometryOverflow("synth_sample: jittered blob leaves the image");

  auto radius_at = [&](double theta) {
    double s = 1.0;
    for (int k = 0; k < K; ++k) s += amp[k] * std::sin((k + 1) * theta + phase[k]);
    return r0 * s;
  };
  auto in_blob = [&](int r, int c) {
    double dy = r - crow, dx = c - ccol;
    double rho = std::sqrt(dy * dy + dx * dx);
    if (rho > rmax) return false;
    return rho <= radius_at(std::atan2(dy, dx));
  };

  // exact boundary of the clean mask (before blur/noise)
  Pixel start{-1, -1};
  for (int r = crow - reach; start.row < 0 && r <= crow + reach; ++r)
    for (int c = ccol - reach; c <= ccol + reach; ++c)
      if (in_blob(r, c)) {
        start = {r, c};
        break;
      }
  if (start.row < 0) throw GeometryOverflow("synth_sample: empty blob");
  std::vector<Pixel> seq = trace_boundary(
      height, width, [&](int r, int c) { return in_blob(r, c); }, start);
  std::set<Pixel> uniq(seq.begin(), seq.end());
  if (uniq.size() != seq.size() || !is_closed_eight_connected(seq))
    throw DegenerateContour("synth_sample: traced boundary is not a simple closed curve");
  Contour contour;
  contour.points = std::move(seq);
  contour = ensure_ccw(std::move(contour));

  // render: two-level mask, blur, noise, then quantise to the 8-bit grid so
  // PGM round-trips are exact
  GrayImage img(height, width, params.exterior_level);
  for (int r = crow - reach; r <= crow + reach; ++r)
    for (int c = ccol - reach; c <= ccol + reach; ++c)
      if (in_blob(r, c)) img.at(r, c) = params.interior_level;
  img = box_blur(img, params.blur_radius);
  for (float& v : img.data) {
    v += static_cast<float>(rng.normal(0.0, params.noise_sigma));
    if (v < 0.0f) v = 0.0f;
    if (v > 1.0f) v = 1.0f;
    v = std::round(v * 255.0f) / 255.0f;
  }

  Sample s;
  s.id = "s" + std::to_string(params.seed);
  s.image = std::move(img);
  s.contour = std::move(contour);
  return s;
}

}  // namespace crl
