#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "contourrl/env.hpp"
#include "contourrl/kernels.hpp"
#include "contourrl/landing.hpp"
#include "contourrl/ppo.hpp"
#include "contourrl/synth.hpp"

namespace crl {

// everything a run needs, resolved from defaults, the optional JSON config
// file and command-line overrides (flags win)
struct RunConfig {
  uint64_t seed = 1;
  int threads = 0;  // 0 keeps the OpenMP default
  Engine engine = Engine::fast;

  // dataset generation
  int synth_count = 100;
  int synth_height = 208;
  int synth_width = 162;
  int split_train = 32;
  int split_val = 8;
  int split_test = 60;
  SynthParams synth;  // per-sample seed is derived from the global seed

  EnvConfig env;
  PPOConfig ppo;

  int landing_iterations = 1200;
  bool landing_augment = true;  // add the vertically flipped copy of each train pair
  LineSearchConfig line_search;
};

// command-line arguments shared across subcommands plus per-command paths
struct CliOptions {
  std::string config_path;
  std::optional<uint64_t> seed;
  std::optional<int> threads;
  std::string out_dir;

  std::string dataset;       // dataset manifest path
  std::string image_path;    // trace: input image
  std::string policy_ckpt;   // trace/eval
  std::string landing_ckpt;  // trace/eval (trace: optional if --start given)
  std::string gt_contour;    // trace: optional ground-truth contour csv
  std::string start;         // trace: explicit start "row,col"
  bool resume = false;       // train-*: continue from the last checkpoint
};

RunConfig load_run_config(const std::string& path);   // "" returns defaults
RunConfig resolve_config(const CliOptions& opt);      // file + flag overrides
nlohmann::json config_json(const RunConfig& cfg);     // resolved snapshot

int cmd_synth(const RunConfig& cfg, const CliOptions& opt);
int cmd_preprocess(const RunConfig& cfg, const CliOptions& opt);
int cmd_train_landing(const RunConfig& cfg, const CliOptions& opt);
int cmd_train_agent(const RunConfig& cfg, const CliOptions& opt);
int cmd_trace(const RunConfig& cfg, const CliOptions& opt);
int cmd_eval(const RunConfig& cfg, const CliOptions& opt);

// full argv-level entry point used by the binary (and by tests)
int run_cli(int argc, const char* const* argv);

}  // namespace crl
