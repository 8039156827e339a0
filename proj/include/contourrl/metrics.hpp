#pragma once

#include <string>
#include <vector>

#include "contourrl/env.hpp"
#include "contourrl/network.hpp"
#include "contourrl/synth.hpp"

namespace crl {

// segmentation masks are compared as pixel sets
using PixelSet = std::vector<Pixel>;

// region enclosed by a closed curve, including the curve itself: everything
// a 4-connected flood fill from the image border cannot reach
GrayImage fill_contour(const std::vector<Pixel>& curve, int h, int w);

PixelSet mask_pixels(const GrayImage& mask);

// 2|A n B| / (|A| + |B|); throws BothEmpty when both sets are empty
double dice(const PixelSet& a, const PixelSet& b);

// symmetric hausdorff distance between point sets (exact, euclidean);
// throws EmptySet when either set is empty
double hausdorff(const PixelSet& a, const PixelSet& b);

// closes an open walk by appending the discrete line from its last point
// back to its first, dropping consecutive duplicates; throws DegenerateTrace
// for fewer than 3 points
std::vector<Pixel> close_trace(const std::vector<Pixel>& trace);

struct EvalRow {
  std::string id;
  Pixel landing{0, 0};
  double dice_score = 0.0;
  double hausdorff_px = 0.0;
  int steps = 0;
  TerminationReason reason = TerminationReason::none;
  bool success = false;  // episode ended by the home rule
};

struct EvalReport {
  std::vector<EvalRow> rows;
  double dice_mean = 0.0, dice_std = 0.0;
  double hausdorff_mean = 0.0, hausdorff_std = 0.0;
  int success_count = 0;
};

// runs the full test-time pipeline on every sample: landing prediction,
// greedy walk, trace closing, region fill, dice + hausdorff against the
// ground truth.  Walks that fail to close score dice 0 and keep their raw
// trace for the hausdorff column.
EvalReport evaluate(const Network& policy, const Network& landing_net,
                    const std::vector<Sample>& test_set, const EnvConfig& env_cfg);

// greedy test-mode walk from a chosen start pixel
Episode greedy_test_walk(const Network& policy, const GrayImage& img, const EnvConfig& env_cfg,
                         const Pixel& start);

void write_eval_csv(const std::string& path, const EvalReport& report);
void write_eval_json(const std::string& path, const EvalReport& report);

// grayscale image with the ground truth drawn red and the prediction blue
RgbImage make_overlay(const GrayImage& img, const std::vector<Pixel>& gt,
                      const std::vector<Pixel>& predicted);

}  // namespace crl
