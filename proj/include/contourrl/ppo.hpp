#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "contourrl/env.hpp"
#include "contourrl/network.hpp"

namespace crl {

struct PPOConfig {
  double clip = 0.2;          // surrogate clipping half-width
  int starts_per_image = 8;   // trajectories collected per training image
  int actor_steps = 20;       // policy gradient steps per iteration
  int critic_steps = 20;      // value gradient steps per iteration
  float learning_rate = 3e-4f;
  // the value regression and the clipped surrogate have very different
  // gradient scales, so each side may override the shared rate (0 inherits)
  float actor_lr = 0.0f;
  float critic_lr = 0.0f;
  float lr_decay = 0.999f;    // lr_k = learning_rate * lr_decay^k
  int iterations = 2000;
  uint64_t val_start_seed = 17;  // fixes the per-image validation start points
  int update_chunk = 2048;       // states per forward/backward chunk
};

// one collected episode; observations are stored flat, one patch per step,
// each taken before the action it produced
struct Trajectory {
  int sample_index = 0;
  int start_index = 0;
  int steps = 0;
  int obs_size = 0;  // floats per observation
  std::vector<float> observations;
  std::vector<uint8_t> actions;  // codes 1..8
  std::vector<float> behavior_log_probs;
  std::vector<float> rewards;        // raw
  std::vector<float> rewards_norm;   // batch min-max normalised
  std::vector<double> rewards_to_go;  // discounted suffix sums of rewards_norm
  std::vector<float> advantages;     // z-scored across the batch
  TerminationReason reason = TerminationReason::none;

  const float* obs_at(int t) const { return observations.data() + static_cast<size_t>(t) * obs_size; }
};

struct EpisodeBatch {
  std::vector<Trajectory> trajectories;
  size_t total_steps() const;
};

// test hook: overrides action selection (e.g. with the oracle walker)
using ActionOverride = std::function<Action(const Episode&, const float* probs)>;

// runs starts_per_image episodes per sample in lockstep, sampling actions
// from the policy; start indices and action draws come from per-trajectory
// rng streams derived from (seed, iteration, sample, start), so the batch is
// reproducible and independent of scheduling
EpisodeBatch collect_rollouts(const Network& policy, const std::vector<Sample>& samples,
                              const EnvConfig& env_cfg, const PPOConfig& cfg, uint64_t seed,
                              uint64_t iteration, const ActionOverride* override_action = nullptr);

// min-max maps all raw rewards in the batch onto [0,1] (constant batches map
// to 0); fills rewards_norm
void normalize_batch(EpisodeBatch& batch);

// discounted suffix sums of the normalised rewards
void compute_rewards_to_go(EpisodeBatch& batch, double gamma);

// advantage = reward-to-go minus the value baseline, then z-scored across
// the whole batch (zero vector when the spread is zero)
void estimate_advantage(EpisodeBatch& batch, const Network& value);

double clip(double x, double lo, double hi);

// clipped-surrogate objective under the current policy against the stored
// behaviour log-probs; each trajectory contributes its per-step mean, the
// batch contributes the mean over trajectories.  Throws NonFiniteRatio if a
// probability ratio is not finite.
double surrogate_objective(const Network& policy, const EpisodeBatch& batch, double clip_eps);

// one full-batch gradient step; returns the objective value before the step
double update_policy(Network& policy, const EpisodeBatch& batch, double clip_eps, float lr);
double update_value(Network& value, const EpisodeBatch& batch, float lr);

// greedy (argmax) train-mode walk; returns the undiscounted raw return and
// step count
struct GreedyResult {
  double raw_return = 0.0;
  int steps = 0;
  TerminationReason reason = TerminationReason::none;
};
GreedyResult greedy_train_walk(const Network& policy, const Sample& s, const EnvConfig& env_cfg,
                               int start_index);

struct TrainLogRow {
  int iteration = 0;  // completed iterations after this row
  float lr = 0.0f;
  double mean_return = 0.0;     // raw, undiscounted, over the collected batch
  double surrogate = 0.0;       // objective before the last actor step
  double value_loss = 0.0;      // weighted mse before the last critic step
  double val_return = 0.0;      // mean raw undiscounted return on validation
  double val_deviation = 0.0;   // mean of -return/steps on validation
  bool improved = false;
};

struct TrainAgentResult {
  std::vector<TrainLogRow> log;
  double best_val_return = 0.0;
  int completed_iterations = 0;
  bool aborted_non_finite = false;
};

// full training loop: collect, normalise, alternate actor/critic steps with
// exponentially decayed lr, validate greedily on fixed start points, write
// best checkpoints only on validation improvement and last checkpoints every
// iteration (for resume).  start_iteration > 0 continues counting from a
// resumed state.
TrainAgentResult train_agent(Network& policy, Network& value,
                             const std::vector<Sample>& train_set,
                             const std::vector<Sample>& val_set, const EnvConfig& env_cfg,
                             const PPOConfig& cfg, uint64_t seed, const std::string& out_dir,
                             int start_iteration = 0,
                             double initial_best_val = 0.0, bool have_initial_best = false);

void write_train_log_csv(const std::string& path, const std::vector<TrainLogRow>& rows,
                         bool append);

}  // namespace crl
