#pragma once

#include <functional>
#include <string>
#include <vector>

#include "contourrl/network.hpp"
#include "contourrl/synth.hpp"

namespace crl {

// the landing generator works on a fixed-size crop of the upper-right image
// corner, where the synthetic blobs put their boundary
constexpr int kCropH = 100;
constexpr int kCropW = 80;

struct SubImage {
  GrayImage patch;  // kCropH x kCropW
  int origin_row = 0, origin_col = 0;  // crop position in the full image
};

// contour points that fall inside the crop, in crop-local coordinates
struct LandingTarget {
  std::vector<Pixel> points;
};

struct LandingPair {
  SubImage image;
  LandingTarget target;
};

// throws ImageTooSmall when the image cannot host the crop
SubImage crop_upper_right(const GrayImage& img);

// throws EmptyTarget when no contour point lands inside the crop
LandingPair make_landing_pair(const Sample& s);

// vertical mirror of both patch and target rows; applying it twice gives the
// original pair back
LandingPair flip_augment(const LandingPair& p);

// mean over pairs of the distance from the predicted point to the nearest
// target point
double landing_loss(const Network& net, const std::vector<LandingPair>& pairs);

// gradient of landing_loss via the nearest-point subgradient; also reports
// the loss of the same forward pass
Gradients loss_gradient(const Network& net, const std::vector<LandingPair>& pairs,
                        double* loss_out);

struct LineSearchConfig {
  double lambda_lo = 1e-6;
  double lambda_hi = 1.0;
  int secant_iterations = 12;
  double derivative_step = 1e-4;  // h, as a fraction of lambda_hi
  double fallback_lambda = 1e-3;
  int max_shrinks = 20;
  double converge_tol = 1e-6;  // stop secant when lambda moves less than this * lambda_hi
};

struct LineSearchResult {
  double lambda = 0.0;
  bool stalled = false;  // no step size decreased the loss; lambda is 0
  int evals = 0;         // phi evaluations spent
};

// scalar step-size search: secant iteration on the finite-difference
// derivative of phi, falling back to geometric shrinking from
// fallback_lambda; an accepted lambda always satisfies phi(lambda) < phi0
LineSearchResult line_search_step(const std::function<double(double)>& phi, double phi0,
                                  const LineSearchConfig& cfg);

// the same search with phi(lambda) = loss(params - lambda * g); the network
// is restored to its original parameters before returning
LineSearchResult line_search_lr(Network& net, const Gradients& g,
                                const std::vector<LandingPair>& pairs, double phi0,
                                const LineSearchConfig& cfg);

struct LandingLogRow {
  int iteration = 0;   // completed iterations after this row
  double train_loss = 0.0;  // loss before the step of this iteration
  double val_loss = 0.0;
  double lambda = 0.0;
  int evals = 0;
};

struct TrainGeneratorResult {
  std::vector<LandingLogRow> log;
  double final_train_loss = 0.0;
  bool stalled = false;
  int completed_iterations = 0;
};

// full-batch gradient descent with the line search choosing every step size;
// the train loss sequence is non-increasing by construction.  Writes
// landing_last.ckpt into out_dir every iteration so runs can resume.
TrainGeneratorResult train_generator(Network& net, const std::vector<LandingPair>& train_pairs,
                                     const std::vector<LandingPair>& val_pairs, int iterations,
                                     const LineSearchConfig& ls, const std::string& out_dir,
                                     int start_iteration = 0);

// predicted landing pixel in full-image coordinates: network output rounded
// half away from zero, clamped to the crop, shifted by the crop origin
Pixel predict_landing(const Network& net, const GrayImage& img);

void write_landing_log_csv(const std::string& path, const std::vector<LandingLogRow>& rows,
                           bool append);

}  // namespace crl
