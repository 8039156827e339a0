#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "common.hpp"
#include "contourrl/errors.hpp"
#include "contourrl/ppo.hpp"
#include "contourrl/random.hpp"
#include "contourrl/synth.hpp"

using namespace crl;

namespace {

constexpr int kPatch = 21;
constexpr int kObs = kPatch * kPatch;

std::vector<float> flat_params(const Network& net) {
  std::vector<float> p(net.param_count());
  net.copy_params_to(p.data());
  return p;
}

Tensor traj_obs_tensor(const Trajectory& tr) {
  Tensor x({tr.steps, kPatch, kPatch, 1});
  std::memcpy(x.ptr(), tr.observations.data(), tr.observations.size() * sizeof(float));
  return x;
}

// hand-assembled batch: random observations and actions; behaviour log-probs
// either replayed from the policy itself (the on-policy case) or drawn at
// random to produce arbitrary ratios
EpisodeBatch crafted_batch(const Network& policy, const std::vector<int>& lengths,
                           uint64_t seed, bool behavior_from_policy) {
  EpisodeBatch batch;
  Rng rng(seed);
  for (int len : lengths) {
    Trajectory tr;
    tr.obs_size = kObs;
    tr.steps = len;
    tr.observations.resize(static_cast<size_t>(len) * kObs);
    for (auto& v : tr.observations) v = static_cast<float>(rng.uniform());
    for (int t = 0; t < len; ++t)
      tr.actions.push_back(static_cast<uint8_t>(rng.uniform_int(1, 8)));
    Tensor probs = forward(policy, traj_obs_tensor(tr));
    for (int t = 0; t < len; ++t) {
      float p = probs.data[static_cast<size_t>(t) * kActionCount + tr.actions[t] - 1];
      tr.behavior_log_probs.push_back(
          behavior_from_policy ? std::log(p) : static_cast<float>(rng.uniform(-3.0, -0.5)));
    }
    for (int t = 0; t < len; ++t) {
      tr.advantages.push_back(static_cast<float>(rng.uniform(-2.0, 2.0)));
      tr.rewards.push_back(static_cast<float>(rng.uniform(-5.0, 0.0)));
    }
    batch.trajectories.push_back(std::move(tr));
  }
  return batch;
}

// independent implementation of the two-level surrogate mean, same state
// order as the flattened batch
double oracle_surrogate(const Network& policy, const EpisodeBatch& batch, double eps) {
  double total = 0.0;
  float inv_n = 1.0f / static_cast<float>(batch.trajectories.size());
  for (const Trajectory& tr : batch.trajectories) {
    float w = inv_n / static_cast<float>(tr.steps);
    Tensor probs = forward(policy, traj_obs_tensor(tr));
    for (int t = 0; t < tr.steps; ++t) {
      float p = probs.data[static_cast<size_t>(t) * kActionCount + tr.actions[t] - 1];
      float cur = std::log(p);
      double ratio =
          std::exp(static_cast<double>(cur) - static_cast<double>(tr.behavior_log_probs[t]));
      double a = tr.advantages[t];
      double clipped = std::min(std::max(ratio, 1.0 - eps), 1.0 + eps) * a;
      total += w * std::min(ratio * a, clipped);
    }
  }
  return total;
}

std::vector<Sample> tiny_samples(int count, uint64_t seed0, double radius = 10.0) {
  std::vector<Sample> out;
  for (int i = 0; i < count; ++i) {
    SynthParams p;
    p.seed = seed0 + static_cast<uint64_t>(i);
    p.base_radius = radius;
    out.push_back(synth_sample(p, 104, 81));
  }
  return out;
}

}  // namespace

TEST_CASE("clip pins values to the interval") {
  CHECK(clip(0.5, 0.8, 1.2) == 0.8);
  CHECK(clip(1.5, 0.8, 1.2) == 1.2);
  CHECK(clip(1.0, 0.8, 1.2) == 1.0);
  CHECK(clip(0.8, 0.8, 1.2) == 0.8);
  CHECK(clip(1.2, 0.8, 1.2) == 1.2);
  CHECK(clip(-3.0, -1.0, 1.0) == -1.0);
}

TEST_CASE("rewards to go match the quadratic-time oracle") {
  EpisodeBatch batch;
  Rng rng(321);
  for (int len : {200, 1, 7}) {
    Trajectory tr;
    tr.steps = len;
    tr.rewards_norm.resize(len);
    for (auto& v : tr.rewards_norm) v = static_cast<float>(rng.uniform());
    batch.trajectories.push_back(std::move(tr));
  }
  for (double gamma : {0.99, 1.0, 0.5}) {
    compute_rewards_to_go(batch, gamma);
    for (const Trajectory& tr : batch.trajectories) {
      REQUIRE(tr.rewards_to_go.size() == static_cast<size_t>(tr.steps));
      for (int i = 0; i < tr.steps; ++i) {
        double want = 0.0;
        for (int j = i; j < tr.steps; ++j)
          want += std::pow(gamma, j - i) * static_cast<double>(tr.rewards_norm[j]);
        CHECK(std::abs(tr.rewards_to_go[i] - want) <= 1e-9);
      }
    }
  }
}

TEST_CASE("batch normalisation maps rewards onto the unit interval") {
  EpisodeBatch batch;
  Trajectory a, b;
  a.rewards = {-400.0f, -3.0f};
  a.steps = 2;
  b.rewards = {-1.0f, -2.0f, -400.0f};
  b.steps = 3;
  batch.trajectories = {a, b};
  normalize_batch(batch);
  // lo = -400, hi = -1, span = 399; extremes map to the interval ends
  CHECK(batch.trajectories[0].rewards_norm[0] == 0.0f);
  CHECK(batch.trajectories[1].rewards_norm[0] == 1.0f);
  CHECK(batch.trajectories[1].rewards_norm[2] == 0.0f);
  CHECK(batch.trajectories[0].rewards_norm[1] == (-3.0f + 400.0f) / 399.0f);
  for (const Trajectory& tr : batch.trajectories)
    for (float v : tr.rewards_norm) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }

  // a constant batch has no spread and maps to all zeros
  EpisodeBatch flat;
  Trajectory c;
  c.rewards = {-2.5f, -2.5f, -2.5f};
  c.steps = 3;
  flat.trajectories = {c};
  normalize_batch(flat);
  for (float v : flat.trajectories[0].rewards_norm) CHECK(v == 0.0f);
}

TEST_CASE("advantages are the z-scored value residuals") {
  Network policy = policy_network(71);
  Network value = value_network(72);
  EpisodeBatch batch = crafted_batch(policy, {9, 5, 13}, 7100, true);
  normalize_batch(batch);
  compute_rewards_to_go(batch, 0.99);
  estimate_advantage(batch, value);

  // mirror the computation independently: residual, then z-score
  std::vector<float> raw;
  for (const Trajectory& tr : batch.trajectories) {
    Tensor v = forward(value, traj_obs_tensor(tr));
    for (int t = 0; t < tr.steps; ++t)
      raw.push_back(static_cast<float>(tr.rewards_to_go[t] -
                                       static_cast<double>(v.data[t])));
  }
  double mean = 0.0;
  for (float v : raw) mean += v;
  mean /= static_cast<double>(raw.size());
  double var = 0.0;
  for (float v : raw) var += (v - mean) * (v - mean);
  var /= static_cast<double>(raw.size());
  double sd = std::sqrt(var);
  REQUIRE(sd > 1e-12);

  size_t k = 0;
  double sum = 0.0, sumsq = 0.0;
  for (const Trajectory& tr : batch.trajectories)
    for (int t = 0; t < tr.steps; ++t, ++k) {
      float want = static_cast<float>((raw[k] - mean) / sd);
      CHECK(tr.advantages[t] == want);
      sum += tr.advantages[t];
      sumsq += static_cast<double>(tr.advantages[t]) * tr.advantages[t];
    }
  CHECK(std::abs(sum) <= 1e-4 * static_cast<double>(raw.size()));
  CHECK(std::abs(sumsq - static_cast<double>(raw.size())) <= 1e-3 * raw.size());

  // a single one-step trajectory has zero spread: advantage exactly zero
  EpisodeBatch single = crafted_batch(policy, {1}, 7200, true);
  normalize_batch(single);
  compute_rewards_to_go(single, 0.99);
  estimate_advantage(single, value);
  CHECK(single.trajectories[0].advantages[0] == 0.0f);
}

TEST_CASE("surrogate equals the independent min/clip oracle") {
  Network policy = policy_network(81);
  EpisodeBatch batch = crafted_batch(policy, {6, 11, 3, 8}, 8100, false);
  for (double eps : {0.2, 0.05, 0.5}) {
    double got = surrogate_objective(policy, batch, eps);
    double want = oracle_surrogate(policy, batch, eps);
    CHECK(std::abs(got - want) <= 1e-12 * (1.0 + std::abs(want)));
  }
}

TEST_CASE("surrogate at the behaviour policy is exactly the mean advantage") {
  Network policy = policy_network(83);
  EpisodeBatch batch = crafted_batch(policy, {7, 12, 4}, 8300, true);
  // every ratio replays to exactly 1, so the objective reduces to the
  // two-level advantage mean with no tolerance at all
  double mean_adv = 0.0;
  float inv_n = 1.0f / static_cast<float>(batch.trajectories.size());
  for (const Trajectory& tr : batch.trajectories) {
    float w = inv_n / static_cast<float>(tr.steps);
    for (int t = 0; t < tr.steps; ++t)
      mean_adv += w * static_cast<double>(tr.advantages[t]);
  }
  double got = surrogate_objective(policy, batch, 0.2);
  CHECK(got == mean_adv);
}

TEST_CASE("non-finite probability ratios abort loudly") {
  Network policy = policy_network(85);
  EpisodeBatch batch = crafted_batch(policy, {5}, 8500, true);
  batch.trajectories[0].behavior_log_probs[2] = -1e30f;  // ratio overflows to inf
  CHECK_THROWS_AS(surrogate_objective(policy, batch, 0.2), NonFiniteRatio);
  CHECK_THROWS_AS(update_policy(policy, batch, 0.2, 1e-3f), NonFiniteRatio);
}

TEST_CASE("rollout collection is reproducible and replayable") {
  Network policy = policy_network(91);
  std::vector<Sample> samples = tiny_samples(2, 400);
  EnvConfig env_cfg;
  PPOConfig cfg;
  cfg.starts_per_image = 3;

  EpisodeBatch a = collect_rollouts(policy, samples, env_cfg, cfg, 5, 0);
  EpisodeBatch b = collect_rollouts(policy, samples, env_cfg, cfg, 5, 0);
  REQUIRE(a.trajectories.size() == 6u);
  REQUIRE(b.trajectories.size() == 6u);
  CHECK(a.total_steps() == b.total_steps());
  for (size_t i = 0; i < a.trajectories.size(); ++i) {
    const Trajectory &ta = a.trajectories[i], &tb = b.trajectories[i];
    CHECK(ta.start_index == tb.start_index);
    CHECK(ta.steps == tb.steps);
    CHECK(ta.reason == tb.reason);
    CHECK(ta.actions == tb.actions);
    CHECK(ta.observations == tb.observations);
    CHECK(ta.behavior_log_probs == tb.behavior_log_probs);
    CHECK(ta.rewards == tb.rewards);
  }

  // a different iteration draws different starts/actions
  EpisodeBatch c = collect_rollouts(policy, samples, env_cfg, cfg, 5, 1);
  bool any_diff = false;
  for (size_t i = 0; i < c.trajectories.size(); ++i)
    if (c.trajectories[i].start_index != a.trajectories[i].start_index ||
        c.trajectories[i].actions != a.trajectories[i].actions)
      any_diff = true;
  CHECK(any_diff);

  // stored behaviour log-probs replay bitwise through a fresh forward pass
  for (const Trajectory& tr : a.trajectories) {
    REQUIRE(tr.sample_index >= 0);
    const Sample& s = samples[tr.sample_index];
    // a trajectory either completes the full contour or leaves the image
    if (tr.reason == TerminationReason::completed)
      CHECK(tr.steps == s.contour.size());
    else
      CHECK(tr.reason == TerminationReason::out_of_image);
    Tensor probs = forward(policy, traj_obs_tensor(tr));
    for (int t = 0; t < tr.steps; ++t) {
      float p = probs.data[static_cast<size_t>(t) * kActionCount + tr.actions[t] - 1];
      CHECK(tr.behavior_log_probs[t] == std::log(p));
    }
  }
}

TEST_CASE("rollouts driven by the oracle walker earn zero reward everywhere") {
  Network policy = policy_network(93);
  std::vector<Sample> samples = tiny_samples(2, 500);
  EnvConfig env_cfg;
  PPOConfig cfg;
  cfg.starts_per_image = 2;
  ActionOverride oracle = [](const Episode& ep, const float*) {
    return oracle_policy_action(ep);
  };
  EpisodeBatch batch = collect_rollouts(policy, samples, env_cfg, cfg, 5, 0, &oracle);
  REQUIRE(batch.trajectories.size() == 4u);
  for (const Trajectory& tr : batch.trajectories) {
    CHECK(tr.reason == TerminationReason::completed);
    CHECK(tr.steps == samples[tr.sample_index].contour.size());
    for (float r : tr.rewards) CHECK(r == 0.0f);
  }
}

TEST_CASE("policy updates move probability toward positive-advantage actions") {
  for (float adv : {1.0f, -1.0f}) {
    CAPTURE(adv);
    Network policy = policy_network(95);
    EpisodeBatch batch = crafted_batch(policy, {1}, 9500, true);
    batch.trajectories[0].advantages[0] = adv;
    const Trajectory& tr = batch.trajectories[0];

    Tensor before = forward(policy, traj_obs_tensor(tr));
    float p_before = before.data[tr.actions[0] - 1];
    double obj = update_policy(policy, batch, 0.2, 1e-3f);
    // the returned objective is evaluated before the step, at the behaviour
    // policy, so it equals the advantage itself (single state, ratio 1)
    CHECK(obj == static_cast<double>(adv));
    Tensor after = forward(policy, traj_obs_tensor(tr));
    float p_after = after.data[tr.actions[0] - 1];
    if (adv > 0)
      CHECK(p_after > p_before);
    else
      CHECK(p_after < p_before);
  }
}

TEST_CASE("fully clipped states contribute no policy gradient") {
  Network policy = policy_network(97);
  EpisodeBatch batch = crafted_batch(policy, {4}, 9700, true);
  Trajectory& tr = batch.trajectories[0];
  // positive advantages with ratios pushed above 1 + eps: min() picks the
  // clipped constant branch, whose derivative is zero
  for (int t = 0; t < tr.steps; ++t) {
    tr.advantages[t] = 1.5f;
    tr.behavior_log_probs[t] -= std::log(1.5f);  // ratio becomes ~1.5 > 1.2
  }
  auto before = flat_params(policy);
  double obj = update_policy(policy, batch, 0.2, 1e-2f);
  auto after = flat_params(policy);
  CHECK(std::memcmp(before.data(), after.data(), before.size() * sizeof(float)) == 0);
  // objective is the clipped value: (1 + eps) * advantage on every state
  CHECK(std::abs(obj - 1.2 * 1.5) <= 1e-6);
}

TEST_CASE("value updates descend the weighted squared error") {
  Network policy = policy_network(99);
  Network value = value_network(98);
  EpisodeBatch batch = crafted_batch(policy, {10, 6}, 9900, true);
  normalize_batch(batch);
  compute_rewards_to_go(batch, 0.99);

  // the returned loss is computed before the step: mirror it independently
  double want = 0.0;
  float inv_n = 1.0f / static_cast<float>(batch.trajectories.size());
  for (const Trajectory& tr : batch.trajectories) {
    float w = inv_n / static_cast<float>(tr.steps);
    Tensor v = forward(value, traj_obs_tensor(tr));
    for (int t = 0; t < tr.steps; ++t) {
      double d = static_cast<double>(v.data[t]) - tr.rewards_to_go[t];
      want += w * d * d;
    }
  }
  double l0 = update_value(value, batch, 1e-4f);
  CHECK(std::abs(l0 - want) <= 1e-12 * (1.0 + std::abs(want)));

  // at a small enough step size, repeated full-batch steps keep reducing the
  // pre-step loss (larger rates legitimately overshoot and oscillate)
  double prev = l0;
  for (int i = 0; i < 5; ++i) {
    double l = update_value(value, batch, 1e-4f);
    CHECK(l < prev);
    prev = l;
  }
}

TEST_CASE("greedy walk replays the argmax policy faithfully") {
  Network policy = policy_network(101);
  std::vector<Sample> samples = tiny_samples(1, 600);
  const Sample& s = samples[0];
  EnvConfig env_cfg;
  GreedyResult got = greedy_train_walk(policy, s, env_cfg, 3);

  Episode ep = make_train_episode(s, env_cfg, 3);
  Observation obs = observe(s.image, ep.position, env_cfg.patch_size);
  double ret = 0.0;
  while (!ep.done) {
    Tensor x({1, kPatch, kPatch, 1});
    std::copy(obs.patch.begin(), obs.patch.end(), x.data.begin());
    Tensor probs = forward(policy, x);
    int best = 0;
    for (int i = 1; i < kActionCount; ++i)
      if (probs.data[i] > probs.data[best]) best = i;
    StepResult sr = step(ep, best + 1);
    ret += sr.reward;
    if (!sr.done) obs = std::move(sr.obs);
  }
  CHECK(got.steps == ep.step_count);
  CHECK(got.reason == ep.reason);
  CHECK(got.raw_return == ret);
}

TEST_CASE("training resumes bit-exactly from the last checkpoint") {
  test::TempDir tmp;
  std::vector<Sample> train = tiny_samples(2, 700, 8.0);
  std::vector<Sample> val = tiny_samples(1, 800, 8.0);
  EnvConfig env_cfg;
  PPOConfig cfg;
  cfg.starts_per_image = 2;
  cfg.actor_steps = 2;
  cfg.critic_steps = 2;
  cfg.learning_rate = 1e-3f;

  // leg 1: two iterations
  std::filesystem::create_directories(tmp.file("a"));
  Network pa = policy_network(1001);
  Network va = value_network(1002);
  cfg.iterations = 2;
  TrainAgentResult ra = train_agent(pa, va, train, val, env_cfg, cfg, 42, tmp.file("a"));
  CHECK(ra.completed_iterations == 2);
  CHECK(!ra.aborted_non_finite);
  REQUIRE(ra.log.size() == 3u);  // initial row + one per iteration
  CHECK(ra.log[0].iteration == 0);
  CHECK(ra.log[2].iteration == 2);

  // leg 2: resume from the saved state and run two more
  Checkpoint cp = load_checkpoint(tmp.file("a/policy_last.ckpt"));
  Checkpoint cv = load_checkpoint(tmp.file("a/value_last.ckpt"));
  REQUIRE(cp.iteration == 2);
  cfg.iterations = 4;
  TrainAgentResult rr =
      train_agent(cp.net, cv.net, train, val, env_cfg, cfg, 42, tmp.file("a"),
                  static_cast<int>(cp.iteration), cp.meta.at("best_val"), true);
  CHECK(rr.completed_iterations == 4);
  REQUIRE(rr.log.size() == 2u);
  CHECK(rr.log[0].iteration == 3);
  CHECK(rr.log[1].iteration == 4);

  // reference: four iterations in one go from the same initial nets
  std::filesystem::create_directories(tmp.file("b"));
  Network pb = policy_network(1001);
  Network vb = value_network(1002);
  TrainAgentResult rb = train_agent(pb, vb, train, val, env_cfg, cfg, 42, tmp.file("b"));
  CHECK(rb.completed_iterations == 4);

  auto p1 = flat_params(cp.net), p2 = flat_params(pb);
  CHECK(std::memcmp(p1.data(), p2.data(), p1.size() * sizeof(float)) == 0);
  auto v1 = flat_params(cv.net), v2 = flat_params(vb);
  CHECK(std::memcmp(v1.data(), v2.data(), v1.size() * sizeof(float)) == 0);
  // the per-iteration log rows agree across the resume boundary
  for (size_t i = 0; i < rr.log.size(); ++i) {
    const TrainLogRow &a = rr.log[i], &b = rb.log[i + 3];
    CHECK(a.iteration == b.iteration);
    CHECK(a.mean_return == b.mean_return);
    CHECK(a.surrogate == b.surrogate);
    CHECK(a.value_loss == b.value_loss);
    CHECK(a.val_return == b.val_return);
  }

  // checkpoints exist and carry the iteration numbers
  for (const char* name : {"policy_best.ckpt", "value_best.ckpt", "policy_last.ckpt",
                           "value_last.ckpt"})
    CHECK(std::filesystem::exists(tmp.file(std::string("b/") + name)));
}

TEST_CASE("train log csv writes a header once and appends rows") {
  test::TempDir tmp;
  std::vector<TrainLogRow> rows(2);
  rows[0].iteration = 0;
  rows[0].lr = 1e-3f;
  rows[0].val_return = -12.5;
  rows[0].improved = true;
  rows[1].iteration = 1;
  rows[1].lr = 0.99e-3f;
  rows[1].mean_return = -34.25;
  rows[1].surrogate = 0.125;
  rows[1].value_loss = 2.5;
  rows[1].val_return = -10.0;
  rows[1].val_deviation = 0.8;

  std::string path = tmp.file("log.csv");
  write_train_log_csv(path, rows, false);
  std::vector<TrainLogRow> more(1);
  more[0].iteration = 2;
  write_train_log_csv(path, more, true);

  std::ifstream in(path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  REQUIRE(lines.size() == 4u);
  CHECK(lines[0] ==
        "iteration,lr,mean_return,surrogate,value_loss,val_return,val_deviation,improved");
  CHECK(lines[1].substr(0, 2) == "0,");
  CHECK(lines[1].back() == '1');  // improved flag
  CHECK(lines[2].substr(0, 2) == "1,");
  CHECK(lines[3].substr(0, 2) == "2,");
}

TEST_CASE("batch step totals sum the trajectory lengths") {
  EpisodeBatch batch;
  for (int len : {3, 0, 7}) {
    Trajectory tr;
    tr.steps = len;
    batch.trajectories.push_back(tr);
  }
  CHECK(batch.total_steps() == 10u);
}
