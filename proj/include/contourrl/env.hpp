#pragma once

#include <string>
#include <vector>

#include "contourrl/synth.hpp"

namespace crl {

struct EnvConfig {
  int patch_size = 21;                  // odd; observation window side
  float out_of_image_penalty = -400.0f; // reward for stepping outside
  double gamma = 0.99;                  // discount for returns
  int home_warmup = 20;                 // test mode: earliest step the home rule applies
  int home_window = 5;                  // test mode: trace prefix the agent must return to
  int max_test_steps = 600;             // test mode: hard step cap
};

// actions are the 8 compass moves, coded 1..8 clockwise from north
using Action = int;
constexpr int kActionCount = 8;

// (drow, dcol) displacement for an action code
Pixel action_offset(Action a);

// square intensity patch centred on a position, zero outside the image,
// row-major, patch_size * patch_size floats
struct Observation {
  int n = 0;
  std::vector<float> patch;
};

Observation observe(const GrayImage& img, const Pixel& pos, int patch_size);

enum class TerminationReason { none, completed, out_of_image, home, max_steps };

const char* termination_reason_name(TerminationReason r);

// one walk over an image.  Train mode follows the ground-truth contour for
// exactly its length and pays the distance to the moving reference point;
// test mode has no reference and ends by the home rule or the step cap.
struct Episode {
  enum class Mode { train, test };

  Mode mode = Mode::train;
  const GrayImage* image = nullptr;
  const Contour* contour = nullptr;  // required in train mode
  EnvConfig cfg;

  int start_index = 0;  // train mode: index of the starting contour point
  Pixel position;
  int step_count = 0;
  bool done = false;
  TerminationReason reason = TerminationReason::none;
  std::vector<Pixel> trace;    // visited positions, trace[0] = start
  std::vector<float> rewards;  // raw reward per step
};

Episode make_train_episode(const Sample& s, const EnvConfig& cfg, int start_index);
Episode make_test_episode(const GrayImage& img, const EnvConfig& cfg, const Pixel& start);

struct StepResult {
  Observation obs;  // observation at the new position (zeros if the move left the image)
  float reward = 0.0f;
  bool done = false;
};

// applies one action; throws EpisodeFinished if the episode is already done
StepResult step(Episode& ep, Action a);

// test-mode stopping rule: enough steps taken and back within chebyshev
// distance 1 of one of the first home_window trace positions
bool home_terminated(const Episode& ep);

// discounted sum of the episode's rewards
double total_return(const Episode& ep, double gamma);

// the action a perfect walker would take in train mode: the move whose
// target is nearest to the next reference contour point (ties by action code)
Action oracle_policy_action(const Episode& ep);

// trace export: positions as csv plus a small json summary
void write_trace_csv(const std::string& path, const std::vector<Pixel>& trace);
void write_trace_summary(const std::string& path, const Episode& ep);

}  // namespace crl
