#pragma once

#include <cstdint>
#include <string>

#include "contourrl/contour.hpp"
#include "contourrl/image.hpp"

namespace crl {

// parameters for one synthetic blob image; a Sample is a pure function of
// these plus the image size
struct SynthParams {
  uint64_t seed = 0;
  double base_radius = 28.0;     // mean radius r0 in pixels
  int harmonic_count = 3;        // number of sinusoidal radius harmonics
  double max_amplitude = 0.18;   // bound on the summed relative amplitudes, < 0.5
  double noise_sigma = 0.03;     // additive gaussian pixel noise
  int blur_radius = 2;           // box blur half-width (0 disables)
  int center_jitter = 5;         // +/- uniform jitter of the blob centre
  float interior_level = 0.75f;  // pre-noise intensity inside the blob
  float exterior_level = 0.25f;  // pre-noise intensity outside
};

// one labelled example: grayscale image plus ground-truth boundary
struct Sample {
  std::string id;
  GrayImage image;
  Contour contour;
};

// renders a star-convex blob with a wavy radius profile near the upper-right
// region of the image, blurs, adds noise, quantises intensities to the 8-bit
// grid, and returns it with the exact traced boundary of the clean mask.
// Throws GeometryOverflow if the blob cannot fit inside the image.
Sample synth_sample(const SynthParams& params, int height, int width);

}  // namespace crl
