#include "contourrl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <queue>

#include <nlohmann/json.hpp>

#include "contourrl/contour.hpp"
#include "contourrl/errors.hpp"
#include "contourrl/landing.hpp"

namespace crl {

GrayImage fill_contour(const std::vector<Pixel>& curve, int h, int w) {
  GrayImage on_curve(h, w, 0.0f);
  for (const Pixel& p : curve) {
    if (p.row < 0 || p.row >= h || p.col < 0 || p.col >= w)
      throw BoundsError("fill_contour: curve point outside image");
    on_curve.at(p.row, p.col) = 1.0f;
  }
  // flood the exterior from the border with 4-connectivity; diagonal curve
  // steps stay watertight
  std::vector<uint8_t> outside(static_cast<size_t>(h) * w, 0);
  std::queue<Pixel> q;
  auto push = [&](int r, int c) {
    size_t i = static_cast<size_t>(r) * w + c;
    if (!outside[i] && on_curve.at(r, c) == 0.0f) {
      outside[i] = 1;
      q.push({r, c});
    }
  };
  for (int c = 0; c < w; ++c) {
    push(0, c);
    push(h - 1, c);
  }
  for (int r = 0; r < h; ++r) {
    push(r, 0);
    push(r, w - 1);
  }
  while (!q.empty()) {
    Pixel p = q.front();
    q.pop();
    if (p.row > 0) push(p.row - 1, p.col);
    if (p.row + 1 < h) push(p.row + 1, p.col);
    if (p.col > 0) push(p.row, p.col - 1);
    if (p.col + 1 < w) push(p.row, p.col + 1);
  }
  GrayImage segment(h, w, 0.0f);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      if (!outside[static_cast<size_t>(r) * w + c]) segment.at(r, c) = 1.0f;
  return segment;
}

PixelSet mask_pixels(const GrayImage& mask) {
  PixelSet out;
  for (int r = 0; r < mask.height; ++r)
    for (int c = 0; c < mask.width; ++c)
      if (mask.at(r, c) > 0.5f) out.push_back({r, c});
  return out;
}

namespace {

PixelSet unique_sorted(PixelSet s) {
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  return s;
}

}  // namespace

double dice(const PixelSet& a_in, const PixelSet& b_in) {
  PixelSet a = unique_sorted(a_in), b = unique_sorted(b_in);
  if (a.empty() && b.empty()) throw BothEmpty("dice: both sets empty");
  PixelSet inter;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(inter));
  return 2.0 * static_cast<double>(inter.size()) /
         static_cast<double>(a.size() + b.size());
}

double hausdorff(const PixelSet& a, const PixelSet& b) {
  if (a.empty() || b.empty()) throw EmptySet("hausdorff: empty point set");
  auto directed = [](const PixelSet& s, const PixelSet& t) {
    double worst = 0.0;
    for (const Pixel& p : s) {
      double best = 1e300;
      for (const Pixel& q : t) {
        double dr = p.row - q.row, dc = p.col - q.col;
        best = std::min(best, dr * dr + dc * dc);
        if (best == 0.0) break;
      }
      worst = std::max(worst, best);
    }
    return worst;
  };
  return std::sqrt(std::max(directed(a, b), directed(b, a)));
}

std::vector<Pixel> close_trace(const std::vector<Pixel>& trace) {
  if (trace.size() < 3) throw DegenerateTrace("close_trace: fewer than 3 points");
  std::vector<Pixel> out = trace;
  for (const Pixel& p : line_between(trace.back(), trace.front())) out.push_back(p);
  // drop consecutive duplicates, including across the cyclic seam
  std::vector<Pixel> dedup;
  for (const Pixel& p : out)
    if (dedup.empty() || !(dedup.back() == p)) dedup.push_back(p);
  while (dedup.size() > 1 && dedup.back() == dedup.front()) dedup.pop_back();
  return dedup;
}

Episode greedy_test_walk(const Network& policy, const GrayImage& img, const EnvConfig& env_cfg,
                         const Pixel& start) {
  Episode ep = make_test_episode(img, env_cfg, start);
  Observation obs = observe(img, start, env_cfg.patch_size);
  while (!ep.done) {
    Tensor x({1, env_cfg.patch_size, env_cfg.patch_size, 1});
    std::copy(obs.patch.begin(), obs.patch.end(), x.data.begin());
    Tensor probs = forward(policy, x);
    int best = 0;
    for (int i = 1; i < kActionCount; ++i)
      if (probs.data[i] > probs.data[best]) best = i;
    StepResult sr = step(ep, best + 1);
    if (!sr.done) obs = std::move(sr.obs);
  }
  return ep;
}

EvalReport evaluate(const Network& policy, const Network& landing_net,
                    const std::vector<Sample>& test_set, const EnvConfig& env_cfg) {
  EvalReport report;
  for (const Sample& s : test_set) {
    EvalRow row;
    row.id = s.id;
    row.landing = predict_landing(landing_net, s.image);
    Episode ep = greedy_test_walk(policy, s.image, env_cfg, row.landing);
    row.steps = ep.step_count;
    row.reason = ep.reason;
    row.success = ep.reason == TerminationReason::home;

    PixelSet gt_points = s.contour.points;
    if (row.success) {
      std::vector<Pixel> closed = close_trace(ep.trace);
      GrayImage pred_seg = fill_contour(closed, s.image.height, s.image.width);
      GrayImage gt_seg = fill_contour(s.contour.points, s.image.height, s.image.width);
      row.dice_score = dice(mask_pixels(pred_seg), mask_pixels(gt_seg));
      row.hausdorff_px = hausdorff(gt_points, closed);
    } else {
      row.dice_score = 0.0;
      row.hausdorff_px = hausdorff(gt_points, ep.trace);
    }
    report.rows.push_back(row);
  }

  auto mean_std = [](const std::vector<double>& v, double* m, double* sd) {
    if (v.empty()) {
      *m = *sd = 0.0;
      return;
    }
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= static_cast<double>(v.size());
    *m = mean;
    *sd = std::sqrt(var);
  };
  std::vector<double> d, hd;
  for (const EvalRow& r : report.rows) {
    d.push_back(r.dice_score);
    hd.push_back(r.hausdorff_px);
    report.success_count += r.success ? 1 : 0;
  }
  mean_std(d, &report.dice_mean, &report.dice_std);
  mean_std(hd, &report.hausdorff_mean, &report.hausdorff_std);
  return report;
}

void write_eval_csv(const std::string& path, const EvalReport& report) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open for write: " + path);
  out << "id,landing_row,landing_col,dice,hausdorff,steps,reason\n";
  char buf[256];
  for (const EvalRow& r : report.rows) {
    std::snprintf(buf, sizeof(buf), "%s,%d,%d,%.8g,%.8g,%d,%s\n", r.id.c_str(), r.landing.row,
                  r.landing.col, r.dice_score, r.hausdorff_px, r.steps,
                  termination_reason_name(r.reason));
    out << buf;
  }
  if (!out) throw Error("short write: " + path);
}

void write_eval_json(const std::string& path, const EvalReport& report) {
  nlohmann::json doc{{"dice_mean", report.dice_mean},
                     {"dice_std", report.dice_std},
                     {"hausdorff_mean", report.hausdorff_mean},
                     {"hausdorff_std", report.hausdorff_std},
                     {"success_count", report.success_count},
                     {"count", report.rows.size()}};
  std::ofstream out(path);
  if (!out) throw Error("cannot open for write: " + path);
  out << doc.dump(2) << "\n";
  if (!out) throw Error("short write: " + path);
}

RgbImage make_overlay(const GrayImage& img, const std::vector<Pixel>& gt,
                      const std::vector<Pixel>& predicted) {
  RgbImage rgb(img.height, img.width);
  for (int r = 0; r < img.height; ++r)
    for (int c = 0; c < img.width; ++c) {
      uint8_t v = static_cast<uint8_t>(std::lround(std::clamp(img.at(r, c), 0.0f, 1.0f) * 255));
      rgb.set(r, c, v, v, v);
    }
  for (const Pixel& p : gt)
    if (img.inside(p)) rgb.set(p.row, p.col, 255, 0, 0);
  for (const Pixel& p : predicted)
    if (img.inside(p)) rgb.set(p.row, p.col, 0, 0, 255);
  return rgb;
}

}  // namespace crl
