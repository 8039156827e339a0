#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "common.hpp"
#include "contourrl/contour.hpp"
#include "contourrl/errors.hpp"
#include "contourrl/metrics.hpp"
#include "contourrl/random.hpp"
#include "contourrl/synth.hpp"

using namespace crl;

namespace {

// all-pairs double-precision reference for the symmetric hausdorff distance
double hausdorff_oracle(const PixelSet& a, const PixelSet& b) {
  auto directed = [](const PixelSet& s, const PixelSet& t) {
    double worst = 0.0;
    for (const Pixel& p : s) {
      double best = 1e300;
      for (const Pixel& q : t) {
        double dr = p.row - q.row, dc = p.col - q.col;
        best = std::min(best, std::sqrt(dr * dr + dc * dc));
      }
      worst = std::max(worst, best);
    }
    return worst;
  };
  return std::max(directed(a, b), directed(b, a));
}

// counting-based reference for the dice overlap
double dice_oracle(PixelSet a, PixelSet b) {
  std::sort(a.begin(), a.end());
  a.erase(std::unique(a.begin(), a.end()), a.end());
  std::sort(b.begin(), b.end());
  b.erase(std::unique(b.begin(), b.end()), b.end());
  size_t inter = 0;
  for (const Pixel& p : a) inter += std::binary_search(b.begin(), b.end(), p) ? 1 : 0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(a.size() + b.size());
}

PixelSet random_set(Rng& rng, int max_points, int span) {
  int n = static_cast<int>(rng.uniform_int(1, max_points));
  PixelSet s;
  for (int i = 0; i < n; ++i)
    s.push_back({static_cast<int>(rng.uniform_int(0, span)),
                 static_cast<int>(rng.uniform_int(0, span))});
  return s;
}

int count_filled(const GrayImage& m) {
  int n = 0;
  for (float v : m.data) n += v > 0.5f ? 1 : 0;
  return n;
}

}  // namespace

TEST_CASE("region fill keeps the curve and everything it encloses") {
  // a 3x3 ring occupies the whole image: border curve plus sealed centre
  std::vector<Pixel> ring = {{0, 0}, {1, 0}, {2, 0}, {2, 1}, {2, 2}, {1, 2}, {0, 2}, {0, 1}};
  GrayImage seg = fill_contour(ring, 3, 3);
  CHECK(count_filled(seg) == 9);
  CHECK(seg.at(1, 1) == 1.0f);

  // an open stroke encloses nothing: the fill is the stroke itself
  std::vector<Pixel> stroke = {{1, 2}, {2, 2}, {3, 2}};
  GrayImage open_seg = fill_contour(stroke, 5, 5);
  CHECK(count_filled(open_seg) == 3);
  CHECK(open_seg.at(2, 1) == 0.0f);
  CHECK(open_seg.at(2, 3) == 0.0f);

  // diagonal ring steps stay watertight under the 4-connected exterior flood
  std::vector<Pixel> diamond = {{0, 2}, {1, 1}, {2, 0}, {3, 1}, {4, 2}, {3, 3}, {2, 4}, {1, 3}};
  GrayImage dseg = fill_contour(diamond, 5, 5);
  CHECK(count_filled(dseg) == 13);  // 8 curve pixels + 5 interior
  CHECK(dseg.at(2, 2) == 1.0f);
  CHECK(dseg.at(0, 0) == 0.0f);

  CHECK_THROWS_AS(fill_contour({{0, 0}, {5, 5}}, 3, 3), BoundsError);
}

TEST_CASE("mask pixels threshold at one half") {
  GrayImage m(2, 3, 0.0f);
  m.at(0, 1) = 0.6f;
  m.at(1, 2) = 1.0f;
  m.at(1, 0) = 0.5f;  // not strictly above the threshold
  PixelSet got = mask_pixels(m);
  REQUIRE(got.size() == 2u);
  CHECK(got[0] == Pixel{0, 1});
  CHECK(got[1] == Pixel{1, 2});
}

TEST_CASE("dice matches hand counts and ignores duplicates") {
  PixelSet a = {{0, 0}, {0, 1}};
  PixelSet b = {{0, 1}, {5, 5}};
  CHECK(dice(a, b) == 0.5);
  CHECK(dice(a, a) == 1.0);
  CHECK(dice(a, {{9, 9}}) == 0.0);
  CHECK(dice(a, {}) == 0.0);

  PixelSet dup = {{0, 0}, {0, 0}, {0, 1}, {0, 1}};
  CHECK(dice(dup, b) == 0.5);

  CHECK_THROWS_AS(dice({}, {}), BothEmpty);
}

TEST_CASE("hausdorff matches hand values and the brute-force oracle") {
  CHECK(hausdorff({{0, 0}}, {{3, 4}}) == 5.0);
  CHECK(hausdorff({{2, 2}}, {{2, 2}}) == 0.0);
  // directed distances differ; the symmetric value is the larger one
  PixelSet a = {{0, 0}, {0, 10}};
  PixelSet b = {{0, 0}};
  CHECK(hausdorff(a, b) == 10.0);
  CHECK(hausdorff(b, a) == 10.0);

  CHECK_THROWS_AS(hausdorff({}, {{0, 0}}), EmptySet);
  CHECK_THROWS_AS(hausdorff({{0, 0}}, {}), EmptySet);

  Rng rng(5150);
  std::vector<PixelSet> sets;
  for (int i = 0; i < 30; ++i) sets.push_back(random_set(rng, 15, 40));
  for (int i = 0; i + 1 < 30; ++i) {
    double got = hausdorff(sets[i], sets[i + 1]);
    CHECK(std::abs(got - hausdorff_oracle(sets[i], sets[i + 1])) <= 1e-12);
    CHECK(got == hausdorff(sets[i + 1], sets[i]));  // symmetry
    CHECK(std::abs(dice(sets[i], sets[i + 1]) - dice_oracle(sets[i], sets[i + 1])) == 0.0);
  }
  for (int i = 0; i + 2 < 30; i += 3) {
    double ab = hausdorff(sets[i], sets[i + 1]);
    double bc = hausdorff(sets[i + 1], sets[i + 2]);
    double ac = hausdorff(sets[i], sets[i + 2]);
    CHECK(ac <= ab + bc + 1e-12);  // metric triangle inequality
  }
}

TEST_CASE("closing a trace yields an eight-connected ring") {
  // the seam from the far end back to the start is filled with line pixels
  std::vector<Pixel> open_walk = {{0, 0}, {0, 1}, {0, 2}, {0, 3}, {1, 4}, {2, 4}, {3, 4}};
  std::vector<Pixel> closed = close_trace(open_walk);
  REQUIRE(closed.size() >= open_walk.size());
  for (size_t i = 0; i < closed.size(); ++i) {
    const Pixel& p = closed[i];
    const Pixel& q = closed[(i + 1) % closed.size()];
    CHECK(p != q);
    CHECK(std::max(std::abs(p.row - q.row), std::abs(p.col - q.col)) <= 1);
  }
  // the original walk is a prefix of the closed ring
  for (size_t i = 0; i < open_walk.size(); ++i) CHECK(closed[i] == open_walk[i]);

  // an already-closed ring passes through unchanged
  std::vector<Pixel> ring = {{0, 0}, {1, 0}, {2, 1}, {1, 2}, {0, 1}};
  REQUIRE(is_closed_eight_connected(ring));
  std::vector<Pixel> same = close_trace(ring);
  REQUIRE(same.size() == ring.size());
  for (size_t i = 0; i < ring.size(); ++i) CHECK(same[i] == ring[i]);

  CHECK_THROWS_AS(close_trace({{0, 0}, {1, 1}}), DegenerateTrace);
}

TEST_CASE("a walk that retraces the ground truth scores a perfect dice") {
  SynthParams p;
  p.seed = 77;
  p.base_radius = 12.0;
  Sample s = synth_sample(p, 104, 81);
  std::vector<Pixel> closed = close_trace(s.contour.points);
  GrayImage pred = fill_contour(closed, s.image.height, s.image.width);
  GrayImage gt = fill_contour(s.contour.points, s.image.height, s.image.width);
  CHECK(dice(mask_pixels(pred), mask_pixels(gt)) == 1.0);
  CHECK(hausdorff(s.contour.points, closed) == 0.0);
}

TEST_CASE("evaluation reports one consistent row per sample") {
  Network policy = policy_network(301);
  Network landing = landing_network(302);
  std::vector<Sample> test_set;
  for (uint64_t seed : {401ull, 402ull}) {
    SynthParams p;
    p.seed = seed;
    p.base_radius = 12.0;
    test_set.push_back(synth_sample(p, 104, 81));
  }
  EnvConfig env_cfg;
  env_cfg.max_test_steps = 120;  // untrained walks need a short leash
  EvalReport report = evaluate(policy, landing, test_set, env_cfg);
  REQUIRE(report.rows.size() == 2u);

  int successes = 0;
  std::vector<double> d, hd;
  for (size_t i = 0; i < report.rows.size(); ++i) {
    const EvalRow& r = report.rows[i];
    CHECK(r.id == test_set[i].id);
    CHECK(r.success == (r.reason == TerminationReason::home));
    if (!r.success) CHECK(r.dice_score == 0.0);
    CHECK(r.dice_score >= 0.0);
    CHECK(r.dice_score <= 1.0);
    CHECK(r.hausdorff_px >= 0.0);
    CHECK(std::isfinite(r.hausdorff_px));
    CHECK(r.steps > 0);
    // the landing point sits inside the image
    CHECK(test_set[i].image.inside(r.landing));
    successes += r.success ? 1 : 0;
    d.push_back(r.dice_score);
    hd.push_back(r.hausdorff_px);
  }
  CHECK(report.success_count == successes);
  double dm = (d[0] + d[1]) / 2.0, hm = (hd[0] + hd[1]) / 2.0;
  CHECK(std::abs(report.dice_mean - dm) <= 1e-12);
  CHECK(std::abs(report.hausdorff_mean - hm) <= 1e-12);
  double dv = ((d[0] - dm) * (d[0] - dm) + (d[1] - dm) * (d[1] - dm)) / 2.0;
  CHECK(std::abs(report.dice_std - std::sqrt(dv)) <= 1e-12);

  // the same evaluation twice is deterministic
  EvalReport again = evaluate(policy, landing, test_set, env_cfg);
  REQUIRE(again.rows.size() == report.rows.size());
  for (size_t i = 0; i < report.rows.size(); ++i) {
    CHECK(again.rows[i].dice_score == report.rows[i].dice_score);
    CHECK(again.rows[i].hausdorff_px == report.rows[i].hausdorff_px);
    CHECK(again.rows[i].steps == report.rows[i].steps);
  }

  // round-trip the report through its two output formats
  test::TempDir tmp;
  write_eval_csv(tmp.file("eval.csv"), report);
  std::ifstream in(tmp.file("eval.csv"));
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  REQUIRE(lines.size() == 3u);
  CHECK(lines[0] == "id,landing_row,landing_col,dice,hausdorff,steps,reason");
  CHECK(lines[1].substr(0, report.rows[0].id.size() + 1) == report.rows[0].id + ",");

  write_eval_json(tmp.file("eval.json"), report);
  std::ifstream jin(tmp.file("eval.json"));
  nlohmann::json doc = nlohmann::json::parse(jin);
  CHECK(doc.at("count").get<size_t>() == report.rows.size());
  CHECK(doc.at("dice_mean").get<double>() == report.dice_mean);
  CHECK(doc.at("hausdorff_mean").get<double>() == report.hausdorff_mean);
  CHECK(doc.at("success_count").get<int>() == report.success_count);
}

TEST_CASE("greedy test walks stop by the home rule or the step cap") {
  Network policy = policy_network(305);
  SynthParams p;
  p.seed = 88;
  p.base_radius = 12.0;
  Sample s = synth_sample(p, 104, 81);
  EnvConfig env_cfg;
  env_cfg.max_test_steps = 40;
  Episode ep = greedy_test_walk(policy, s.image, env_cfg, s.contour.points[0]);
  CHECK(ep.done);
  CHECK(ep.mode == Episode::Mode::test);
  CHECK(ep.reason != TerminationReason::none);
  CHECK(ep.reason != TerminationReason::completed);  // completion is train-only
  CHECK(ep.step_count <= env_cfg.max_test_steps);
  CHECK(static_cast<int>(ep.trace.size()) == ep.step_count + 1);
  CHECK(ep.trace[0] == s.contour.points[0]);
}

TEST_CASE("overlays draw ground truth red, then prediction blue on top") {
  GrayImage img(4, 4, 0.5f);
  std::vector<Pixel> gt = {{1, 1}, {2, 2}, {99, 99}};        // off-image points skipped
  std::vector<Pixel> predicted = {{2, 2}, {3, 0}, {-1, 0}};  // overwrites gt at (2,2)
  RgbImage rgb = make_overlay(img, gt, predicted);
  auto px = [&](int r, int c) {
    size_t i = (static_cast<size_t>(r) * rgb.width + c) * 3;
    return std::array<uint8_t, 3>{rgb.data[i], rgb.data[i + 1], rgb.data[i + 2]};
  };
  CHECK(px(1, 1) == std::array<uint8_t, 3>{255, 0, 0});
  CHECK(px(2, 2) == std::array<uint8_t, 3>{0, 0, 255});
  CHECK(px(3, 0) == std::array<uint8_t, 3>{0, 0, 255});
  CHECK(px(0, 0) == std::array<uint8_t, 3>{128, 128, 128});  // 0.5 rounds half up
}
