#include "contourrl/env.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "contourrl/errors.hpp"

namespace crl {

namespace {

// action codes 1..8: N, NE, E, SE, S, SW, W, NW
constexpr int kActRow[9] = {0, -1, -1, 0, 1, 1, 1, 0, -1};
constexpr int kActCol[9] = {0, 0, 1, 1, 1, 0, -1, -1, -1};

}  // namespace

Pixel action_offset(Action a) {
  if (a < 1 || a > 8) throw Error("action_offset: action code out of range");
  return {kActRow[a], kActCol[a]};
}

Observation observe(const GrayImage& img, const Pixel& pos, int patch_size) {
  if (!img.inside(pos)) throw PositionOutOfImage("observe: position outside image");
  Observation o;
  o.n = patch_size;
  o.patch.assign(static_cast<size_t>(patch_size) * patch_size, 0.0f);
  int half = patch_size / 2;
  for (int dr = -half; dr <= half; ++dr) {
    int r = pos.row + dr;
    if (r < 0 || r >= img.height) continue;
    for (int dc = -half; dc <= half; ++dc) {
      int c = pos.col + dc;
      if (c < 0 || c >= img.width) continue;
      o.patch[static_cast<size_t>(dr + half) * patch_size + (dc + half)] = img.at(r, c);
    }
  }
  return o;
}

const char* termination_reason_name(TerminationReason r) {
  switch (r) {
    case TerminationReason::none: return "none";
    case TerminationReason::completed: return "completed";
    case TerminationReason::out_of_image: return "out_of_image";
    case TerminationReason::home: return "home";
    case TerminationReason::max_steps: return "max_steps";
  }
  return "?";
}

Episode make_train_episode(const Sample& s, const EnvConfig& cfg, int start_index) {
  if (s.contour.size() == 0) throw Error("make_train_episode: empty contour");
  if (start_index < 0 || start_index >= s.contour.size())
    throw BoundsError("make_train_episode: start index outside contour");
  Episode ep;
  ep.mode = Episode::Mode::train;
  ep.image = &s.image;
  ep.contour = &s.contour;
  ep.cfg = cfg;
  ep.start_index = start_index;
  ep.position = s.contour[start_index];
  ep.trace.push_back(ep.position);
  return ep;
}

Episode make_test_episode(const GrayImage& img, const EnvConfig& cfg, const Pixel& start) {
  if (!img.inside(start)) throw PositionOutOfImage("make_test_episode: start outside image");
  Episode ep;
  ep.mode = Episode::Mode::test;
  ep.image = &img;
  ep.cfg = cfg;
  ep.position = start;
  ep.trace.push_back(start);
  return ep;
}

bool home_terminated(const Episode& ep) {
  if (ep.step_count < ep.cfg.home_warmup) return false;
  int n = std::min<int>(ep.cfg.home_window, static_cast<int>(ep.trace.size()));
  for (int i = 0; i < n; ++i)
    if (chebyshev(ep.position, ep.trace[i]) <= 1) return true;
  return false;
}

StepResult step(Episode& ep, Action a) {
  if (ep.done) throw EpisodeFinished("step: episode already finished");
  Pixel d = action_offset(a);
  Pixel next{ep.position.row + d.row, ep.position.col + d.col};
  ep.step_count += 1;

  StepResult res;
  if (!ep.image->inside(next)) {
    // leaving the image ends the episode immediately with a flat penalty;
    // the position and trace keep the last in-image point
    ep.done = true;
    ep.reason = TerminationReason::out_of_image;
    res.reward = ep.cfg.out_of_image_penalty;
    res.obs.n = ep.cfg.patch_size;
    res.obs.patch.assign(static_cast<size_t>(res.obs.n) * res.obs.n, 0.0f);
    res.done = true;
    ep.rewards.push_back(res.reward);
    return res;
  }

  ep.position = next;
  ep.trace.push_back(next);

  if (ep.mode == Episode::Mode::train) {
    // reward is the negative distance to the reference point that advances
    // one contour step per time step
    const Contour& c = *ep.contour;
    const Pixel& ref = c.at_mod(ep.start_index + ep.step_count);
    res.reward = static_cast<float>(-euclidean(next, ref));
    if (ep.step_count >= c.size()) {
      ep.done = true;
      ep.reason = TerminationReason::completed;
    }
  } else {
    res.reward = 0.0f;
    if (home_terminated(ep)) {
      ep.done = true;
      ep.reason = TerminationReason::home;
    } else if (ep.step_count >= ep.cfg.max_test_steps) {
      ep.done = true;
      ep.reason = TerminationReason::max_steps;
    }
  }

  res.obs = observe(*ep.image, ep.position, ep.cfg.patch_size);
  res.done = ep.done;
  ep.rewards.push_back(res.reward);
  return res;
}

double total_return(const Episode& ep, double gamma) {
  // Horner form of sum_t gamma^(t-1) * r_t
  double acc = 0.0;
  for (size_t i = ep.rewards.size(); i-- > 0;) acc = ep.rewards[i] + gamma * acc;
  return acc;
}

Action oracle_policy_action(const Episode& ep) {
  if (ep.mode != Episode::Mode::train)
    throw Error("oracle_policy_action: needs a train-mode episode");
  const Contour& c = *ep.contour;
  const Pixel& ref = c.at_mod(ep.start_index + ep.step_count + 1);
  Action best = 1;
  double best_d = 1e300;
  for (Action a = 1; a <= 8; ++a) {
    Pixel d = action_offset(a);
    Pixel cand{ep.position.row + d.row, ep.position.col + d.col};
    double dist = euclidean(cand, ref);
    if (dist < best_d - 1e-12) {
      best_d = dist;
      best = a;
    }
  }
  return best;
}

void write_trace_csv(const std::string& path, const std::vector<Pixel>& trace) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open for write: " + path);
  for (const Pixel& p : trace) out << p.row << "," << p.col << "\n";
  if (!out) throw Error("short write: " + path);
}

void write_trace_summary(const std::string& path, const Episode& ep) {
  nlohmann::json doc{{"steps", ep.step_count},
                     {"termination_reason", termination_reason_name(ep.reason)},
                     {"return", total_return(ep, ep.cfg.gamma)}};
  std::ofstream out(path);
  if (!out) throw Error("cannot open for write: " + path);
  out << doc.dump(2) << "\n";
  if (!out) throw Error("short write: " + path);
}

}  // namespace crl
