#include "contourrl/commands.hpp"

#include <omp.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <set>

#include <CLI11.hpp>

#include "contourrl/contour.hpp"
#include "contourrl/dataset.hpp"
#include "contourrl/errors.hpp"
#include "contourrl/logging.hpp"
#include "contourrl/manifest.hpp"
#include "contourrl/metrics.hpp"
#include "contourrl/network.hpp"
#include "contourrl/random.hpp"

namespace fs = std::filesystem;

namespace crl {

namespace {

// fixed streams for network initialisation, derived from the global seed
constexpr uint64_t kLandingInitStream = 100;
constexpr uint64_t kPolicyInitStream = 101;
constexpr uint64_t kValueInitStream = 102;
constexpr uint64_t kSampleStream = 1;

template <typename T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  return j.at(key).get<T>();
}

void warn_unknown(const nlohmann::json& j, const char* section,
                  std::initializer_list<const char*> known) {
  if (!j.is_object()) return;
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* k : known)
      if (item.key() == k) {
        ok = true;
        break;
      }
    if (!ok) CRL_WARN("config: unknown key \"" << item.key() << "\" in " << section << " ignored");
  }
}

std::string manifest_path_for(const std::string& out_dir, const std::string& command) {
  fs::path base = fs::path(out_dir) / (command + "_manifest.json");
  if (!fs::exists(base)) return base.string();
  for (int n = 2;; ++n) {
    fs::path p = fs::path(out_dir) / (command + "_manifest." + std::to_string(n) + ".json");
    if (!fs::exists(p)) return p.string();
  }
}

RunManifest start_manifest(const std::string& command, const RunConfig& cfg) {
  RunManifest m;
  m.command = command;
  m.seed = cfg.seed;
  m.config = config_json(cfg);
  return m;
}

void digest_output(RunManifest& m, const std::string& file, const std::string& base_dir) {
  m.outputs.push_back(digest_entry(file, base_dir));
}

// digests the dataset manifest plus every sample file in the given splits
void digest_dataset_inputs(RunManifest& m, const std::string& manifest_path,
                           std::initializer_list<const char*> splits,
                           const std::string& base_dir) {
  m.inputs.push_back(digest_entry(manifest_path, base_dir));
  DatasetManifest dm = read_dataset_manifest(manifest_path);
  fs::path dir = fs::path(manifest_path).parent_path();
  for (const DatasetEntry& e : dm.entries) {
    bool wanted = false;
    for (const char* s : splits)
      if (e.split == s) wanted = true;
    if (!wanted) continue;
    m.inputs.push_back(digest_entry((dir / e.image_path).string(), base_dir));
    m.inputs.push_back(digest_entry((dir / e.contour_path).string(), base_dir));
  }
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw Error(msg);
}

void apply_threads(const RunConfig& cfg) {
  if (cfg.threads > 0) omp_set_num_threads(cfg.threads);
}

std::string run_log_path(const std::string& out_dir) {
  return (fs::path(out_dir) / "run.log").string();
}

std::vector<LandingPair> build_pairs(const std::vector<Sample>& samples, bool augment) {
  std::vector<LandingPair> pairs;
  for (const Sample& s : samples) pairs.push_back(make_landing_pair(s));
  if (augment) {
    size_t n = pairs.size();
    for (size_t i = 0; i < n; ++i) pairs.push_back(flip_augment(pairs[i]));
  }
  return pairs;
}

}  // namespace

RunConfig load_run_config(const std::string& path) {
  RunConfig cfg;
  if (path.empty()) return cfg;
  std::ifstream in(path);
  if (!in) throw Error("cannot open config: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad config json: ") + e.what(), 0);
  }
  warn_unknown(j, "top level", {"seed", "threads", "engine", "synth", "env", "ppo", "landing"});
  cfg.seed = get_or<uint64_t>(j, "seed", cfg.seed);
  cfg.threads = get_or<int>(j, "threads", cfg.threads);
  std::string engine = get_or<std::string>(j, "engine", "fast");
  if (engine == "serial")
    cfg.engine = Engine::serial;
  else if (engine == "fast")
    cfg.engine = Engine::fast;
  else
    throw Error("config: engine must be \"serial\" or \"fast\"");

  if (j.contains("synth")) {
    const nlohmann::json& s = j.at("synth");
    warn_unknown(s, "synth",
                 {"count", "height", "width", "train", "val", "test", "base_radius",
                  "harmonic_count", "max_amplitude", "noise_sigma", "blur_radius", "center_jitter",
                  "interior_level", "exterior_level"});
    cfg.synth_count = get_or<int>(s, "count", cfg.synth_count);
    cfg.synth_height = get_or<int>(s, "height", cfg.synth_height);
    cfg.synth_width = get_or<int>(s, "width", cfg.synth_width);
    cfg.split_train = get_or<int>(s, "train", cfg.split_train);
    cfg.split_val = get_or<int>(s, "val", cfg.split_val);
    cfg.split_test = get_or<int>(s, "test", cfg.split_test);
    cfg.synth.base_radius = get_or<double>(s, "base_radius", cfg.synth.base_radius);
    cfg.synth.harmonic_count = get_or<int>(s, "harmonic_count", cfg.synth.harmonic_count);
    cfg.synth.max_amplitude = get_or<double>(s, "max_amplitude", cfg.synth.max_amplitude);
    cfg.synth.noise_sigma = get_or<double>(s, "noise_sigma", cfg.synth.noise_sigma);
    cfg.synth.blur_radius = get_or<int>(s, "blur_radius", cfg.synth.blur_radius);
    cfg.synth.center_jitter = get_or<int>(s, "center_jitter", cfg.synth.center_jitter);
    cfg.synth.interior_level = get_or<float>(s, "interior_level", cfg.synth.interior_level);
    cfg.synth.exterior_level = get_or<float>(s, "exterior_level", cfg.synth.exterior_level);
  }
  if (j.contains("env")) {
    const nlohmann::json& e = j.at("env");
    warn_unknown(e, "env", {"patch_size", "out_of_image_penalty", "gamma", "home_warmup", "home_window",
                            "max_test_steps"});
    cfg.env.patch_size = get_or<int>(e, "patch_size", cfg.env.patch_size);
    cfg.env.out_of_image_penalty = get_or<float>(e, "out_of_image_penalty", cfg.env.out_of_image_penalty);
    cfg.env.gamma = get_or<double>(e, "gamma", cfg.env.gamma);
    cfg.env.home_warmup = get_or<int>(e, "home_warmup", cfg.env.home_warmup);
    cfg.env.home_window = get_or<int>(e, "home_window", cfg.env.home_window);
    cfg.env.max_test_steps = get_or<int>(e, "max_test_steps", cfg.env.max_test_steps);
  }
  if (j.contains("ppo")) {
    const nlohmann::json& p = j.at("ppo");
    warn_unknown(p, "ppo",
                 {"clip", "starts_per_image", "actor_steps", "critic_steps", "learning_rate",
                  "actor_lr", "critic_lr", "lr_decay", "iterations", "val_start_seed",
                  "update_chunk"});
    cfg.ppo.clip = get_or<double>(p, "clip", cfg.ppo.clip);
    cfg.ppo.starts_per_image = get_or<int>(p, "starts_per_image", cfg.ppo.starts_per_image);
    cfg.ppo.actor_steps = get_or<int>(p, "actor_steps", cfg.ppo.actor_steps);
    cfg.ppo.critic_steps = get_or<int>(p, "critic_steps", cfg.ppo.critic_steps);
    cfg.ppo.learning_rate = get_or<float>(p, "learning_rate", cfg.ppo.learning_rate);
    cfg.ppo.actor_lr = get_or<float>(p, "actor_lr", cfg.ppo.actor_lr);
    cfg.ppo.critic_lr = get_or<float>(p, "critic_lr", cfg.ppo.critic_lr);
    cfg.ppo.lr_decay = get_or<float>(p, "lr_decay", cfg.ppo.lr_decay);
    cfg.ppo.iterations = get_or<int>(p, "iterations", cfg.ppo.iterations);
    cfg.ppo.val_start_seed = get_or<uint64_t>(p, "val_start_seed", cfg.ppo.val_start_seed);
    cfg.ppo.update_chunk = get_or<int>(p, "update_chunk", cfg.ppo.update_chunk);
  }
  if (j.contains("landing")) {
    const nlohmann::json& l = j.at("landing");
    warn_unknown(l, "landing",
                 {"iterations", "augment", "lambda_lo", "lambda_hi", "secant_iterations",
                  "derivative_step", "fallback_lambda", "max_shrinks", "converge_tol"});
    cfg.landing_iterations = get_or<int>(l, "iterations", cfg.landing_iterations);
    cfg.landing_augment = get_or<bool>(l, "augment", cfg.landing_augment);
    cfg.line_search.lambda_lo = get_or<double>(l, "lambda_lo", cfg.line_search.lambda_lo);
    cfg.line_search.lambda_hi = get_or<double>(l, "lambda_hi", cfg.line_search.lambda_hi);
    cfg.line_search.secant_iterations =
        get_or<int>(l, "secant_iterations", cfg.line_search.secant_iterations);
    cfg.line_search.derivative_step =
        get_or<double>(l, "derivative_step", cfg.line_search.derivative_step);
    cfg.line_search.fallback_lambda =
        get_or<double>(l, "fallback_lambda", cfg.line_search.fallback_lambda);
    cfg.line_search.max_shrinks = get_or<int>(l, "max_shrinks", cfg.line_search.max_shrinks);
    cfg.line_search.converge_tol = get_or<double>(l, "converge_tol", cfg.line_search.converge_tol);
  }
  return cfg;
}

RunConfig resolve_config(const CliOptions& opt) {
  RunConfig cfg = load_run_config(opt.config_path);
  if (opt.seed) cfg.seed = *opt.seed;
  if (opt.threads) cfg.threads = *opt.threads;
  return cfg;
}

nlohmann::json config_json(const RunConfig& cfg) {
  return nlohmann::json{
      {"seed", cfg.seed},
      {"threads", cfg.threads},
      {"engine", cfg.engine == Engine::fast ? "fast" : "serial"},
      {"synth",
       {{"count", cfg.synth_count},
        {"height", cfg.synth_height},
        {"width", cfg.synth_width},
        {"train", cfg.split_train},
        {"val", cfg.split_val},
        {"test", cfg.split_test},
        {"base_radius", cfg.synth.base_radius},
        {"harmonic_count", cfg.synth.harmonic_count},
        {"max_amplitude", cfg.synth.max_amplitude},
        {"noise_sigma", cfg.synth.noise_sigma},
        {"blur_radius", cfg.synth.blur_radius},
        {"center_jitter", cfg.synth.center_jitter},
        {"interior_level", cfg.synth.interior_level},
        {"exterior_level", cfg.synth.exterior_level}}},
      {"env",
       {{"patch_size", cfg.env.patch_size},
        {"out_of_image_penalty", cfg.env.out_of_image_penalty},
        {"gamma", cfg.env.gamma},
        {"home_warmup", cfg.env.home_warmup},
        {"home_window", cfg.env.home_window},
        {"max_test_steps", cfg.env.max_test_steps}}},
      {"ppo",
       {{"clip", cfg.ppo.clip},
        {"starts_per_image", cfg.ppo.starts_per_image},
        {"actor_steps", cfg.ppo.actor_steps},
        {"critic_steps", cfg.ppo.critic_steps},
        {"learning_rate", cfg.ppo.learning_rate},
        {"actor_lr", cfg.ppo.actor_lr},
        {"critic_lr", cfg.ppo.critic_lr},
        {"lr_decay", cfg.ppo.lr_decay},
        {"iterations", cfg.ppo.iterations},
        {"val_start_seed", cfg.ppo.val_start_seed},
        {"update_chunk", cfg.ppo.update_chunk}}},
      {"landing",
       {{"iterations", cfg.landing_iterations},
        {"augment", cfg.landing_augment},
        {"lambda_lo", cfg.line_search.lambda_lo},
        {"lambda_hi", cfg.line_search.lambda_hi},
        {"secant_iterations", cfg.line_search.secant_iterations},
        {"derivative_step", cfg.line_search.derivative_step},
        {"fallback_lambda", cfg.line_search.fallback_lambda},
        {"max_shrinks", cfg.line_search.max_shrinks},
        {"converge_tol", cfg.line_search.converge_tol}}}};
}

int cmd_synth(const RunConfig& cfg, const CliOptions& opt) {
  require(!opt.out_dir.empty(), "synth: --out is required");
  apply_threads(cfg);
  fs::create_directories(opt.out_dir);
  append_run_log(run_log_path(opt.out_dir), "synth start");

  if (cfg.synth_count != cfg.split_train + cfg.split_val + cfg.split_test)
    CRL_WARN("synth: count " << cfg.synth_count << " does not match split " << cfg.split_train
                              << "/" << cfg.split_val << "/" << cfg.split_test
                              << "; assigning by order");

  RunManifest rm = start_manifest("synth", cfg);
  DatasetManifest dm;
  for (int i = 0; i < cfg.synth_count; ++i) {
    SynthParams p = cfg.synth;
    p.seed = mix_seed(cfg.seed, kSampleStream, static_cast<uint64_t>(i));
    Sample s = synth_sample(p, cfg.synth_height, cfg.synth_width);
    char id[16];
    std::snprintf(id, sizeof(id), "s%04d", i);
    s.id = id;
    save_sample(opt.out_dir, s);
    DatasetEntry e;
    e.id = s.id;
    e.image_path = s.id + std::string(".pgm");
    e.contour_path = s.id + std::string(".csv");
    e.split = i < cfg.split_train             ? "train"
              : i < cfg.split_train + cfg.split_val ? "val"
                                                    : "test";
    dm.entries.push_back(e);
    digest_output(rm, (fs::path(opt.out_dir) / e.image_path).string(), opt.out_dir);
    digest_output(rm, (fs::path(opt.out_dir) / e.contour_path).string(), opt.out_dir);
  }
  std::string dm_path = (fs::path(opt.out_dir) / "manifest.json").string();
  write_dataset_manifest(dm_path, dm);
  digest_output(rm, dm_path, opt.out_dir);
  write_run_manifest(manifest_path_for(opt.out_dir, "synth"), rm);
  append_run_log(run_log_path(opt.out_dir), "synth done: " + std::to_string(cfg.synth_count) +
                                                " samples");
  CRL_INFO("synth: wrote " << cfg.synth_count << " samples to " << opt.out_dir);
  return 0;
}

int cmd_preprocess(const RunConfig& cfg, const CliOptions& opt) {
  require(!opt.dataset.empty(), "preprocess: --dataset is required");
  require(!opt.out_dir.empty(), "preprocess: --out is required");
  apply_threads(cfg);
  fs::create_directories(opt.out_dir);
  append_run_log(run_log_path(opt.out_dir), "preprocess start");

  RunManifest rm = start_manifest("preprocess", cfg);
  digest_dataset_inputs(rm, opt.dataset, {"train", "val", "test"}, opt.out_dir);

  DatasetManifest dm = read_dataset_manifest(opt.dataset);
  DatasetManifest out_dm;
  fs::path in_dir = fs::path(opt.dataset).parent_path();
  int failures = 0;
  for (const DatasetEntry& e : dm.entries) {
    try {
      Sample s = load_sample(in_dir.string(), e);
      s.contour = ensure_ccw(refine_contour(s.contour.points));
      save_sample(opt.out_dir, s);
      out_dm.entries.push_back(e);
      digest_output(rm, (fs::path(opt.out_dir) / e.image_path).string(), opt.out_dir);
      digest_output(rm, (fs::path(opt.out_dir) / e.contour_path).string(), opt.out_dir);
    } catch (const Error& err) {
      ++failures;
      CRL_ERROR("preprocess: sample " << e.id << " failed: " << err.what());
    }
  }
  std::string dm_path = (fs::path(opt.out_dir) / "manifest.json").string();
  write_dataset_manifest(dm_path, out_dm);
  digest_output(rm, dm_path, opt.out_dir);
  write_run_manifest(manifest_path_for(opt.out_dir, "preprocess"), rm);
  append_run_log(run_log_path(opt.out_dir),
                 "preprocess done: " + std::to_string(failures) + " failures");
  CRL_INFO("preprocess: " << out_dm.entries.size() << " samples refined, " << failures
                                        << " failures");
  return failures == 0 ? 0 : 1;
}

int cmd_train_landing(const RunConfig& cfg, const CliOptions& opt) {
  require(!opt.dataset.empty(), "train-landing: --dataset is required");
  require(!opt.out_dir.empty(), "train-landing: --out is required");
  apply_threads(cfg);
  fs::create_directories(opt.out_dir);
  append_run_log(run_log_path(opt.out_dir), "train-landing start");

  RunManifest rm = start_manifest("train-landing", cfg);
  digest_dataset_inputs(rm, opt.dataset, {"train", "val"}, opt.out_dir);

  std::vector<Sample> train = load_split(opt.dataset, "train");
  std::vector<Sample> val = load_split(opt.dataset, "val");
  require(!train.empty(), "train-landing: train split is empty");
  std::vector<LandingPair> train_pairs = build_pairs(train, cfg.landing_augment);
  std::vector<LandingPair> val_pairs = build_pairs(val, false);
  if (val_pairs.empty()) {
    CRL_WARN("train-landing: empty val split; validating on the training pairs");
    val_pairs = train_pairs;
  }

  std::string last_path = (fs::path(opt.out_dir) / "landing_last.ckpt").string();
  Network net = landing_network(mix_seed(cfg.seed, kLandingInitStream), cfg.engine);
  int start_iteration = 0;
  if (opt.resume) {
    require(fs::exists(last_path), "train-landing: --resume but no " + last_path);
    rm.inputs.push_back(digest_entry(last_path, opt.out_dir));
    Checkpoint ckpt = load_checkpoint(last_path, cfg.engine);
    net = std::move(ckpt.net);
    start_iteration = static_cast<int>(ckpt.iteration);
    CRL_INFO("train-landing: resuming at iteration " << start_iteration);
  }

  TrainGeneratorResult res = train_generator(net, train_pairs, val_pairs, cfg.landing_iterations,
                                             cfg.line_search, opt.out_dir, start_iteration);
  if (res.stalled)
    CRL_INFO("train-landing: converged (no loss-decreasing step) after "
             << res.completed_iterations << " iterations");

  std::string log_path = (fs::path(opt.out_dir) / "landing_log.csv").string();
  write_landing_log_csv(log_path, res.log, /*append=*/start_iteration > 0);
  std::string final_path = (fs::path(opt.out_dir) / "landing.ckpt").string();
  fs::copy_file(last_path, final_path, fs::copy_options::overwrite_existing);

  digest_output(rm, last_path, opt.out_dir);
  digest_output(rm, final_path, opt.out_dir);
  digest_output(rm, log_path, opt.out_dir);
  write_run_manifest(manifest_path_for(opt.out_dir, "train-landing"), rm);
  append_run_log(run_log_path(opt.out_dir),
                 "train-landing done: " + std::to_string(res.completed_iterations) +
                     " iterations, final loss " + std::to_string(res.final_train_loss));
  CRL_INFO("train-landing: " << res.completed_iterations << " iterations, final train loss "
                               << res.final_train_loss);
  return 0;
}

int cmd_train_agent(const RunConfig& cfg, const CliOptions& opt) {
  require(!opt.dataset.empty(), "train-agent: --dataset is required");
  require(!opt.out_dir.empty(), "train-agent: --out is required");
  apply_threads(cfg);
  fs::create_directories(opt.out_dir);
  append_run_log(run_log_path(opt.out_dir), "train-agent start");

  RunManifest rm = start_manifest("train-agent", cfg);
  digest_dataset_inputs(rm, opt.dataset, {"train", "val"}, opt.out_dir);

  std::vector<Sample> train = load_split(opt.dataset, "train");
  std::vector<Sample> val = load_split(opt.dataset, "val");
  require(!train.empty(), "train-agent: train split is empty");
  if (val.empty()) {
    CRL_WARN("train-agent: empty val split; validating on the training set");
    val = train;
  }

  std::string policy_last = (fs::path(opt.out_dir) / "policy_last.ckpt").string();
  std::string value_last = (fs::path(opt.out_dir) / "value_last.ckpt").string();
  Network policy = policy_network(mix_seed(cfg.seed, kPolicyInitStream), cfg.engine);
  Network value = value_network(mix_seed(cfg.seed, kValueInitStream), cfg.engine);
  int start_iteration = 0;
  double best_val = 0.0;
  bool have_best = false;
  if (opt.resume) {
    require(fs::exists(policy_last) && fs::exists(value_last),
            "train-agent: --resume but last checkpoints missing in " + opt.out_dir);
    rm.inputs.push_back(digest_entry(policy_last, opt.out_dir));
    rm.inputs.push_back(digest_entry(value_last, opt.out_dir));
    Checkpoint pc = load_checkpoint(policy_last, cfg.engine);
    Checkpoint vc = load_checkpoint(value_last, cfg.engine);
    require(pc.iteration == vc.iteration, "train-agent: policy/value checkpoint iterations differ");
    policy = std::move(pc.net);
    value = std::move(vc.net);
    start_iteration = static_cast<int>(pc.iteration);
    auto it = pc.meta.find("best_val");
    if (it != pc.meta.end()) {
      best_val = it->second;
      have_best = true;
    }
    CRL_INFO("train-agent: resuming at iteration " << start_iteration);
  }

  TrainAgentResult res = train_agent(policy, value, train, val, cfg.env, cfg.ppo, cfg.seed,
                                     opt.out_dir, start_iteration, best_val, have_best);

  std::string log_path = (fs::path(opt.out_dir) / "train_log.csv").string();
  write_train_log_csv(log_path, res.log, /*append=*/start_iteration > 0);

  for (const char* name : {"policy_last.ckpt", "value_last.ckpt", "policy_best.ckpt",
                           "value_best.ckpt"}) {
    std::string p = (fs::path(opt.out_dir) / name).string();
    if (fs::exists(p)) digest_output(rm, p, opt.out_dir);
  }
  digest_output(rm, log_path, opt.out_dir);
  write_run_manifest(manifest_path_for(opt.out_dir, "train-agent"), rm);
  append_run_log(run_log_path(opt.out_dir),
                 "train-agent done: " + std::to_string(res.completed_iterations) +
                     " iterations, best val return " + std::to_string(res.best_val_return));
  CRL_INFO("train-agent: " << res.completed_iterations << " iterations, best val return "
                             << res.best_val_return
                             << (res.aborted_non_finite ? " (aborted: non-finite ratio)" : ""));
  return res.aborted_non_finite ? 1 : 0;
}

int cmd_trace(const RunConfig& cfg, const CliOptions& opt) {
  require(!opt.image_path.empty(), "trace: --image is required");
  require(!opt.policy_ckpt.empty(), "trace: --policy is required");
  require(!opt.out_dir.empty(), "trace: --out is required");
  require(!opt.landing_ckpt.empty() || !opt.start.empty(),
          "trace: either --landing or --start row,col is required");
  apply_threads(cfg);
  fs::create_directories(opt.out_dir);
  append_run_log(run_log_path(opt.out_dir), "trace start");

  RunManifest rm = start_manifest("trace", cfg);
  rm.inputs.push_back(digest_entry(opt.image_path, opt.out_dir));
  rm.inputs.push_back(digest_entry(opt.policy_ckpt, opt.out_dir));

  GrayImage img = read_pgm(opt.image_path);
  Network policy = load_checkpoint(opt.policy_ckpt, cfg.engine).net;

  Pixel start{0, 0};
  if (!opt.start.empty()) {
    if (std::sscanf(opt.start.c_str(), "%d,%d", &start.row, &start.col) != 2)
      throw Error("trace: --start must be \"row,col\"");
  } else {
    rm.inputs.push_back(digest_entry(opt.landing_ckpt, opt.out_dir));
    Network landing = load_checkpoint(opt.landing_ckpt, cfg.engine).net;
    start = predict_landing(landing, img);
  }
  require(img.inside(start), "trace: start position outside the image");

  Episode ep = greedy_test_walk(policy, img, cfg.env, start);
  bool closed_ok = ep.reason == TerminationReason::home;

  std::string trace_path = (fs::path(opt.out_dir) / "trace.csv").string();
  write_trace_csv(trace_path, ep.trace);
  digest_output(rm, trace_path, opt.out_dir);

  std::string closed_path;
  std::vector<Pixel> closed;
  if (ep.trace.size() >= 3) {
    closed = close_trace(ep.trace);
    closed_path = (fs::path(opt.out_dir) / "contour.csv").string();
    Contour c;
    c.points = closed;
    write_contour_csv(closed_path, c);
    digest_output(rm, closed_path, opt.out_dir);
  }

  std::vector<Pixel> gt;
  if (!opt.gt_contour.empty()) {
    rm.inputs.push_back(digest_entry(opt.gt_contour, opt.out_dir));
    gt = read_contour_csv(opt.gt_contour).points;
  }
  RgbImage overlay = make_overlay(img, gt, closed.empty() ? ep.trace : closed);
  std::string overlay_path = (fs::path(opt.out_dir) / "overlay.ppm").string();
  write_ppm(overlay_path, overlay);
  digest_output(rm, overlay_path, opt.out_dir);

  nlohmann::json summary{{"steps", ep.step_count},
                         {"termination_reason", termination_reason_name(ep.reason)},
                         {"closed", closed_ok},
                         {"start", {start.row, start.col}},
                         {"trace_points", ep.trace.size()}};
  std::string summary_path = (fs::path(opt.out_dir) / "summary.json").string();
  {
    std::ofstream out(summary_path);
    if (!out) throw Error("cannot open for write: " + summary_path);
    out << summary.dump(2) << "\n";
  }
  digest_output(rm, summary_path, opt.out_dir);
  write_run_manifest(manifest_path_for(opt.out_dir, "trace"), rm);
  append_run_log(run_log_path(opt.out_dir),
                 std::string("trace done: ") + termination_reason_name(ep.reason));
  CRL_INFO("trace: " << ep.step_count << " steps, " << termination_reason_name(ep.reason)
                       << (closed_ok ? "" : " (trace did not close)"));
  return 0;
}

int cmd_eval(const RunConfig& cfg, const CliOptions& opt) {
  require(!opt.dataset.empty(), "eval: --dataset is required");
  require(!opt.policy_ckpt.empty(), "eval: --policy is required");
  require(!opt.landing_ckpt.empty(), "eval: --landing is required");
  require(!opt.out_dir.empty(), "eval: --out is required");
  apply_threads(cfg);
  fs::create_directories(opt.out_dir);
  append_run_log(run_log_path(opt.out_dir), "eval start");

  RunManifest rm = start_manifest("eval", cfg);
  digest_dataset_inputs(rm, opt.dataset, {"test"}, opt.out_dir);
  rm.inputs.push_back(digest_entry(opt.policy_ckpt, opt.out_dir));
  rm.inputs.push_back(digest_entry(opt.landing_ckpt, opt.out_dir));

  std::vector<Sample> test = load_split(opt.dataset, "test");
  require(!test.empty(), "eval: test split is empty");

  Network policy = load_checkpoint(opt.policy_ckpt, cfg.engine).net;
  Network landing = load_checkpoint(opt.landing_ckpt, cfg.engine).net;
  EvalReport report = evaluate(policy, landing, test, cfg.env);

  std::string csv_path = (fs::path(opt.out_dir) / "eval.csv").string();
  std::string json_path = (fs::path(opt.out_dir) / "eval.json").string();
  write_eval_csv(csv_path, report);
  write_eval_json(json_path, report);
  digest_output(rm, csv_path, opt.out_dir);
  digest_output(rm, json_path, opt.out_dir);
  write_run_manifest(manifest_path_for(opt.out_dir, "eval"), rm);
  append_run_log(run_log_path(opt.out_dir), "eval done");
  CRL_INFO("eval: " << report.rows.size() << " images, dice " << report.dice_mean << " +/- "
                      << report.dice_std << ", hausdorff " << report.hausdorff_mean << " +/- "
                      << report.hausdorff_std << ", " << report.success_count << "/"
                      << report.rows.size() << " closed");
  return 0;
}

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"contour tracing by reinforcement learning: synthetic data, training, evaluation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kArtifactVersion);

  CliOptions opt;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config_path, "JSON config file");
    sub->add_option("--seed", opt.seed, "global random seed (overrides config)");
    sub->add_option("--out", opt.out_dir, "output directory");
    sub->add_option("--threads", opt.threads, "worker thread cap (overrides config)");
  };

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic labelled dataset");
  add_common(synth);

  CLI::App* preprocess = app.add_subcommand("preprocess", "refine and re-orient dataset contours");
  add_common(preprocess);
  preprocess->add_option("--dataset", opt.dataset, "dataset manifest.json")->required();

  CLI::App* train_landing =
      app.add_subcommand("train-landing", "train the landing-spot generator");
  add_common(train_landing);
  train_landing->add_option("--dataset", opt.dataset, "dataset manifest.json")->required();
  train_landing->add_flag("--resume", opt.resume, "continue from landing_last.ckpt");

  CLI::App* train_agent = app.add_subcommand("train-agent", "train the contour-walking agent");
  add_common(train_agent);
  train_agent->add_option("--dataset", opt.dataset, "dataset manifest.json")->required();
  train_agent->add_flag("--resume", opt.resume, "continue from the last checkpoints");

  CLI::App* trace = app.add_subcommand("trace", "trace one image with trained checkpoints");
  add_common(trace);
  trace->add_option("--image", opt.image_path, "input PGM image")->required();
  trace->add_option("--policy", opt.policy_ckpt, "policy checkpoint")->required();
  trace->add_option("--landing", opt.landing_ckpt, "landing generator checkpoint");
  trace->add_option("--start", opt.start, "explicit start pixel \"row,col\"");
  trace->add_option("--gt", opt.gt_contour, "ground-truth contour CSV for the overlay");

  CLI::App* eval = app.add_subcommand("eval", "evaluate checkpoints on the test split");
  add_common(eval);
  eval->add_option("--dataset", opt.dataset, "dataset manifest.json")->required();
  eval->add_option("--policy", opt.policy_ckpt, "policy checkpoint")->required();
  eval->add_option("--landing", opt.landing_ckpt, "landing generator checkpoint")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    RunConfig cfg = resolve_config(opt);
    if (synth->parsed()) return cmd_synth(cfg, opt);
    if (preprocess->parsed()) return cmd_preprocess(cfg, opt);
    if (train_landing->parsed()) return cmd_train_landing(cfg, opt);
    if (train_agent->parsed()) return cmd_train_agent(cfg, opt);
    if (trace->parsed()) return cmd_trace(cfg, opt);
    if (eval->parsed()) return cmd_eval(cfg, opt);
  } catch (const std::exception& e) {
    CRL_ERROR(e.what());
    return 1;
  }
  return 1;
}

}  // namespace crl
