#include "contourrl/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "contourrl/errors.hpp"
#include "contourrl/logging.hpp"
#include "contourrl/random.hpp"

namespace crl {

namespace {

// flattened (trajectory, step) indexing used by the full-batch updates; the
// order is fixed so results never depend on chunking
struct StateRef {
  const Trajectory* tr;
  int t;
  float weight;  // 1 / (|batch| * T_i)
};

std::vector<StateRef> flatten_states(const EpisodeBatch& batch) {
  std::vector<StateRef> refs;
  refs.reserve(batch.total_steps());
  float inv_n = 1.0f / static_cast<float>(batch.trajectories.size());
  for (const Trajectory& tr : batch.trajectories) {
    float w = inv_n / static_cast<float>(tr.steps);
    for (int t = 0; t < tr.steps; ++t) refs.push_back({&tr, t, w});
  }
  return refs;
}

Tensor gather_obs(const std::vector<StateRef>& refs, size_t lo, size_t hi, int obs_size,
                  const std::vector<int>& input_shape) {
  std::vector<int> shape{static_cast<int>(hi - lo)};
  shape.insert(shape.end(), input_shape.begin(), input_shape.end());
  Tensor x(shape);
  for (size_t i = lo; i < hi; ++i)
    std::memcpy(x.ptr() + (i - lo) * obs_size, refs[i].tr->obs_at(refs[i].t),
                sizeof(float) * obs_size);
  return x;
}

Action sample_action(const float* probs, Rng& rng) {
  double u = rng.uniform();
  double cum = 0.0;
  for (int i = 0; i < kActionCount; ++i) {
    cum += probs[i];
    if (u < cum) return i + 1;
  }
  return kActionCount;  // numerical leftovers land on the last action
}

Action argmax_action(const float* probs) {
  int best = 0;
  for (int i = 1; i < kActionCount; ++i)
    if (probs[i] > probs[best]) best = i;
  return best + 1;
}

}  // namespace

size_t EpisodeBatch::total_steps() const {
  size_t n = 0;
  for (const Trajectory& t : trajectories) n += static_cast<size_t>(t.steps);
  return n;
}

EpisodeBatch collect_rollouts(const Network& policy, const std::vector<Sample>& samples,
                              const EnvConfig& env_cfg, const PPOConfig& cfg, uint64_t seed,
                              uint64_t iteration, const ActionOverride* override_action) {
  int S = static_cast<int>(samples.size());
  int J = cfg.starts_per_image;
  int n = S * J;
  int obs_size = env_cfg.patch_size * env_cfg.patch_size;

  EpisodeBatch batch;
  batch.trajectories.resize(n);
  std::vector<Episode> eps;
  eps.reserve(n);
  std::vector<Rng> rngs;
  rngs.reserve(n);
  std::vector<Observation> cur_obs(n);

  for (int i = 0; i < S; ++i) {
    for (int j = 0; j < J; ++j) {
      int idx = i * J + j;
      rngs.emplace_back(mix_seed(seed, iteration, static_cast<uint64_t>(i),
                                 static_cast<uint64_t>(j)));
      int start =
          static_cast<int>(rngs[idx].uniform_int(0, samples[i].contour.size() - 1));
      eps.push_back(make_train_episode(samples[i], env_cfg, start));
      cur_obs[idx] = observe(samples[i].image, eps[idx].position, env_cfg.patch_size);
      Trajectory& tr = batch.trajectories[idx];
      tr.sample_index = i;
      tr.start_index = start;
      tr.obs_size = obs_size;
      int cap = samples[i].contour.size();
      tr.observations.reserve(static_cast<size_t>(cap) * obs_size);
      tr.actions.reserve(cap);
      tr.behavior_log_probs.reserve(cap);
      tr.rewards.reserve(cap);
    }
  }

  std::vector<int> active(n);
  for (int i = 0; i < n; ++i) active[i] = i;
  std::vector<int> next_active;

  while (!active.empty()) {
    int a_count = static_cast<int>(active.size());
    Tensor x({a_count, env_cfg.patch_size, env_cfg.patch_size, 1});
    for (int k = 0; k < a_count; ++k)
      std::memcpy(x.ptr() + static_cast<size_t>(k) * obs_size,
                  cur_obs[active[k]].patch.data(), sizeof(float) * obs_size);
    Tensor probs = forward(policy, x);

    next_active.clear();
    for (int k = 0; k < a_count; ++k) {
      int idx = active[k];
      const float* row = probs.ptr() + static_cast<size_t>(k) * kActionCount;
      Action a = override_action ? (*override_action)(eps[idx], row)
                                 : sample_action(row, rngs[idx]);
      Trajectory& tr = batch.trajectories[idx];
      tr.observations.insert(tr.observations.end(), cur_obs[idx].patch.begin(),
                             cur_obs[idx].patch.end());
      tr.actions.push_back(static_cast<uint8_t>(a));
      tr.behavior_log_probs.push_back(std::log(row[a - 1]));
      StepResult sr = step(eps[idx], a);
      tr.rewards.push_back(sr.reward);
      tr.steps += 1;
      if (sr.done) {
        tr.reason = eps[idx].reason;
      } else {
        cur_obs[idx] = std::move(sr.obs);
        next_active.push_back(idx);
      }
    }
    active.swap(next_active);
  }
  return batch;
}

void normalize_batch(EpisodeBatch& batch) {
  float lo = 0.0f, hi = 0.0f;
  bool first = true;
  for (const Trajectory& tr : batch.trajectories)
    for (float r : tr.rewards) {
      if (first) {
        lo = hi = r;
        first = false;
      } else {
        lo = std::min(lo, r);
        hi = std::max(hi, r);
      }
    }
  float span = hi - lo;
  for (Trajectory& tr : batch.trajectories) {
    tr.rewards_norm.resize(tr.rewards.size());
    for (size_t i = 0; i < tr.rewards.size(); ++i)
      tr.rewards_norm[i] = span > 0.0f ? (tr.rewards[i] - lo) / span : 0.0f;
  }
}

void compute_rewards_to_go(EpisodeBatch& batch, double gamma) {
  for (Trajectory& tr : batch.trajectories) {
    tr.rewards_to_go.resize(tr.rewards_norm.size());
    double acc = 0.0;
    for (size_t i = tr.rewards_norm.size(); i-- > 0;) {
      acc = tr.rewards_norm[i] + gamma * acc;
      tr.rewards_to_go[i] = acc;
    }
  }
}

void estimate_advantage(EpisodeBatch& batch, const Network& value) {
  std::vector<StateRef> refs = flatten_states(batch);
  size_t n = refs.size();
  std::vector<float> adv(n);
  int obs_size = refs.empty() ? 0 : refs[0].tr->obs_size;
  const int chunk = 4096;
  for (size_t lo = 0; lo < n; lo += chunk) {
    size_t hi = std::min(n, lo + chunk);
    Tensor x = gather_obs(refs, lo, hi, obs_size, value.input_shape);
    Tensor v = forward(value, x);
    for (size_t i = lo; i < hi; ++i)
      adv[i] = static_cast<float>(refs[i].tr->rewards_to_go[refs[i].t] -
                                  static_cast<double>(v.data[i - lo]));
  }

  double mean = 0.0;
  for (float a : adv) mean += a;
  mean /= std::max<size_t>(1, n);
  double var = 0.0;
  for (float a : adv) var += (a - mean) * (a - mean);
  var /= std::max<size_t>(1, n);
  double sd = std::sqrt(var);

  size_t k = 0;
  for (Trajectory& tr : batch.trajectories) {
    tr.advantages.resize(tr.steps);
    for (int t = 0; t < tr.steps; ++t, ++k)
      tr.advantages[t] =
          sd > 1e-12 ? static_cast<float>((adv[k] - mean) / sd) : 0.0f;
  }
}

double clip(double x, double lo, double hi) { return x < lo ? lo : (x > hi ? hi : x); }

double surrogate_objective(const Network& policy, const EpisodeBatch& batch,
                           double clip_eps) {
  std::vector<StateRef> refs = flatten_states(batch);
  size_t n = refs.size();
  int obs_size = refs.empty() ? 0 : refs[0].tr->obs_size;
  double obj = 0.0;
  const int chunk = 4096;
  for (size_t lo = 0; lo < n; lo += chunk) {
    size_t hi = std::min(n, lo + chunk);
    Tensor x = gather_obs(refs, lo, hi, obs_size, policy.input_shape);
    Tensor probs = forward(policy, x);
    for (size_t i = lo; i < hi; ++i) {
      const StateRef& s = refs[i];
      float p = probs.data[(i - lo) * kActionCount + s.tr->actions[s.t] - 1];
      // the current log-prob is computed exactly like the stored behaviour
      // one (log of the float probability), so an unchanged policy gives a
      // ratio of exactly 1
      float cur_lp = std::log(p);
      double ratio = std::exp(static_cast<double>(cur_lp) -
                              static_cast<double>(s.tr->behavior_log_probs[s.t]));
      if (!std::isfinite(ratio))
        throw NonFiniteRatio("surrogate_objective: probability ratio is not finite");
      double a = s.tr->advantages[s.t];
      obj += s.weight * std::min(ratio * a, clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * a);
    }
  }
  return obj;
}

double update_policy(Network& policy, const EpisodeBatch& batch, double clip_eps, float lr) {
  std::vector<StateRef> refs = flatten_states(batch);
  size_t n = refs.size();
  int obs_size = refs.empty() ? 0 : refs[0].tr->obs_size;
  Gradients grads = make_gradients(policy);
  double obj = 0.0;
  const size_t chunk = 2048;
  for (size_t lo = 0; lo < n; lo += chunk) {
    size_t hi = std::min(n, lo + chunk);
    int cb = static_cast<int>(hi - lo);
    Tensor x = gather_obs(refs, lo, hi, obs_size, policy.input_shape);
    ForwardCache cache;
    Tensor probs = forward(policy, x, &cache);
    Tensor dy({cb, kActionCount});
    for (size_t i = lo; i < hi; ++i) {
      const StateRef& s = refs[i];
      int a = s.tr->actions[s.t];
      float p = probs.data[(i - lo) * kActionCount + a - 1];
      float cur_lp = std::log(p);  // same computation as the stored behaviour log-prob
      double ratio = std::exp(static_cast<double>(cur_lp) -
                              static_cast<double>(s.tr->behavior_log_probs[s.t]));
      if (!std::isfinite(ratio))
        throw NonFiniteRatio("update_policy: probability ratio is not finite");
      double adv = s.tr->advantages[s.t];
      double u = ratio * adv;
      double c = clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * adv;
      obj += s.weight * std::min(u, c);
      // d/dp of ratio*adv is ratio*adv/p on the unclipped branch, zero on
      // the clipped one (min picks the unclipped term whenever u <= c)
      if (u <= c && p > 0.0f)
        dy.data[(i - lo) * kActionCount + a - 1] =
            s.weight * static_cast<float>(ratio * adv / static_cast<double>(p));
    }
    backward(policy, cache, dy, grads);
  }
  apply_update(policy, grads, lr, UpdateDirection::ascend);
  return obj;
}

double update_value(Network& value, const EpisodeBatch& batch, float lr) {
  std::vector<StateRef> refs = flatten_states(batch);
  size_t n = refs.size();
  int obs_size = refs.empty() ? 0 : refs[0].tr->obs_size;
  Gradients grads = make_gradients(value);
  double loss = 0.0;
  const size_t chunk = 2048;
  for (size_t lo = 0; lo < n; lo += chunk) {
    size_t hi = std::min(n, lo + chunk);
    int cb = static_cast<int>(hi - lo);
    Tensor x = gather_obs(refs, lo, hi, obs_size, value.input_shape);
    ForwardCache cache;
    Tensor v = forward(value, x, &cache);
    Tensor dy({cb, 1});
    for (size_t i = lo; i < hi; ++i) {
      const StateRef& s = refs[i];
      double d = static_cast<double>(v.data[i - lo]) - s.tr->rewards_to_go[s.t];
      loss += s.weight * d * d;
      dy.data[i - lo] = s.weight * static_cast<float>(2.0 * d);
    }
    backward(value, cache, dy, grads);
  }
  apply_update(value, grads, lr, UpdateDirection::descend);
  return loss;
}

GreedyResult greedy_train_walk(const Network& policy, const Sample& s,
                               const EnvConfig& env_cfg, int start_index) {
  Episode ep = make_train_episode(s, env_cfg, start_index);
  Observation obs = observe(s.image, ep.position, env_cfg.patch_size);
  GreedyResult res;
  while (!ep.done) {
    Tensor x({1, env_cfg.patch_size, env_cfg.patch_size, 1});
    std::copy(obs.patch.begin(), obs.patch.end(), x.data.begin());
    Tensor probs = forward(policy, x);
    StepResult sr = step(ep, argmax_action(probs.ptr()));
    res.raw_return += sr.reward;
    if (!sr.done) obs = std::move(sr.obs);
  }
  res.steps = ep.step_count;
  res.reason = ep.reason;
  return res;
}

namespace {

struct ValScore {
  double mean_return = 0.0;
  double mean_deviation = 0.0;
};

}  // namespace

TrainAgentResult train_agent(Network& policy, Network& value,
                             const std::vector<Sample>& train_set,
                             const std::vector<Sample>& val_set, const EnvConfig& env_cfg,
                             const PPOConfig& cfg, uint64_t seed, const std::string& out_dir,
                             int start_iteration, double initial_best_val,
                             bool have_initial_best) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  auto path = [&](const char* name) { return (fs::path(out_dir) / name).string(); };

  auto run_validation = [&]() {
    ValScore v;
    for (size_t i = 0; i < val_set.size(); ++i) {
      Rng rng(mix_seed(cfg.val_start_seed, i));
      int start = static_cast<int>(rng.uniform_int(0, val_set[i].contour.size() - 1));
      GreedyResult g = greedy_train_walk(policy, val_set[i], env_cfg, start);
      v.mean_return += g.raw_return;
      v.mean_deviation += g.steps > 0 ? -g.raw_return / g.steps : 0.0;
    }
    if (!val_set.empty()) {
      v.mean_return /= static_cast<double>(val_set.size());
      v.mean_deviation /= static_cast<double>(val_set.size());
    }
    return v;
  };

  TrainAgentResult res;
  double best = initial_best_val;
  bool have_best = have_initial_best;

  if (start_iteration == 0) {
    ValScore v = run_validation();
    best = v.mean_return;
    have_best = true;
    save_checkpoint(path("policy_best.ckpt"), policy, 0, {{"best_val", best}});
    save_checkpoint(path("value_best.ckpt"), value, 0, {{"best_val", best}});
    save_checkpoint(path("policy_last.ckpt"), policy, 0, {{"best_val", best}});
    save_checkpoint(path("value_last.ckpt"), value, 0, {{"best_val", best}});
    TrainLogRow row;
    row.iteration = 0;
    row.lr = cfg.actor_lr > 0.0f ? cfg.actor_lr : cfg.learning_rate;
    row.val_return = v.mean_return;
    row.val_deviation = v.mean_deviation;
    row.improved = true;
    res.log.push_back(row);
    CRL_INFO("agent iter 0 (initial) val_return=" << v.mean_return
                                                  << " val_dev=" << v.mean_deviation);
  }

  res.best_val_return = best;
  res.completed_iterations = start_iteration;

  for (int k = start_iteration; k < cfg.iterations; ++k) {
    EpisodeBatch batch =
        collect_rollouts(policy, train_set, env_cfg, cfg, seed, static_cast<uint64_t>(k));
    double mean_ret = 0.0;
    for (const Trajectory& tr : batch.trajectories)
      for (float r : tr.rewards) mean_ret += r;
    mean_ret /= std::max<size_t>(1, batch.trajectories.size());

    normalize_batch(batch);
    compute_rewards_to_go(batch, env_cfg.gamma);
    estimate_advantage(batch, value);

    float decay_k = static_cast<float>(std::pow(cfg.lr_decay, k));
    float actor_lr_k = (cfg.actor_lr > 0.0f ? cfg.actor_lr : cfg.learning_rate) * decay_k;
    float critic_lr_k = (cfg.critic_lr > 0.0f ? cfg.critic_lr : cfg.learning_rate) * decay_k;
    double surr = 0.0, vloss = 0.0;
    try {
      for (int a = 0; a < cfg.actor_steps; ++a)
        surr = update_policy(policy, batch, cfg.clip, actor_lr_k);
      for (int c = 0; c < cfg.critic_steps; ++c) vloss = update_value(value, batch, critic_lr_k);
    } catch (const NonFiniteRatio& ex) {
      CRL_ERROR("agent training aborted at iteration " << k << ": " << ex.what());
      res.aborted_non_finite = true;
      break;
    }
    if (!std::isfinite(surr) || !std::isfinite(vloss)) {
      // a diverged value net would otherwise zero every advantage through the
      // z-score guard and freeze the policy without any visible error
      CRL_ERROR("agent training aborted at iteration "
                << k << ": non-finite update (surrogate=" << surr << " value_loss=" << vloss
                << ")");
      res.aborted_non_finite = true;
      break;
    }

    ValScore v = run_validation();
    bool improved = !have_best || v.mean_return > best;
    if (improved) {
      best = v.mean_return;
      have_best = true;
      save_checkpoint(path("policy_best.ckpt"), policy, k + 1, {{"best_val", best}});
      save_checkpoint(path("value_best.ckpt"), value, k + 1, {{"best_val", best}});
    }
    save_checkpoint(path("policy_last.ckpt"), policy, k + 1, {{"best_val", best}});
    save_checkpoint(path("value_last.ckpt"), value, k + 1, {{"best_val", best}});

    TrainLogRow row;
    row.iteration = k + 1;
    row.lr = actor_lr_k;
    row.mean_return = mean_ret;
    row.surrogate = surr;
    row.value_loss = vloss;
    row.val_return = v.mean_return;
    row.val_deviation = v.mean_deviation;
    row.improved = improved;
    res.log.push_back(row);
    res.completed_iterations = k + 1;
    res.best_val_return = best;
    CRL_INFO("agent iter " << (k + 1) << " mean_return=" << mean_ret << " surr=" << surr
                           << " vloss=" << vloss << " val_return=" << v.mean_return
                           << " val_dev=" << v.mean_deviation
                           << (improved ? " *" : ""));
  }
  res.best_val_return = best;
  return res;
}

void write_train_log_csv(const std::string& path, const std::vector<TrainLogRow>& rows,
                         bool append) {
  std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
  if (!out) throw Error("cannot open for write: " + path);
  if (!append)
    out << "iteration,lr,mean_return,surrogate,value_loss,val_return,val_deviation,improved\n";
  char buf[256];
  for (const TrainLogRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%d,%.8g,%.10g,%.10g,%.10g,%.10g,%.10g,%d\n", r.iteration,
                  r.lr, r.mean_return, r.surrogate, r.value_loss, r.val_return,
                  r.val_deviation, r.improved ? 1 : 0);
    out << buf;
  }
  if (!out) throw Error("short write: " + path);
}

}  // namespace crl
