#include "contourrl/landing.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "contourrl/errors.hpp"
#include "contourrl/logging.hpp"

namespace crl {

namespace {

Tensor gather_patches(const std::vector<LandingPair>& pairs) {
  Tensor x({static_cast<int>(pairs.size()), kCropH, kCropW, 1});
  size_t n = static_cast<size_t>(kCropH) * kCropW;
  for (size_t i = 0; i < pairs.size(); ++i)
    std::memcpy(x.ptr() + i * n, pairs[i].image.patch.data.data(), n * sizeof(float));
  return x;
}

// distance from the prediction to the nearest target point, and that point
double nearest_target(const float* pred, const LandingTarget& t, Pixel* out) {
  double best = 1e300;
  Pixel bp{0, 0};
  for (const Pixel& p : t.points) {
    double dr = static_cast<double>(pred[0]) - p.row;
    double dc = static_cast<double>(pred[1]) - p.col;
    double d = std::sqrt(dr * dr + dc * dc);
    if (d < best) {
      best = d;
      bp = p;
    }
  }
  if (out) *out = bp;
  return best;
}

std::vector<float> flatten_gradients(const Network& net, const Gradients& g) {
  std::vector<float> flat(net.param_count());
  size_t off = 0;
  for (size_t i = 0; i < net.layers.size(); ++i) {
    const Layer& l = net.layers[i];
    if (l.w.numel()) {
      std::memcpy(flat.data() + off, g.w[i].ptr(), l.w.numel() * sizeof(float));
      off += l.w.numel();
      std::memcpy(flat.data() + off, g.b[i].ptr(), l.b.numel() * sizeof(float));
      off += l.b.numel();
    }
  }
  return flat;
}

}  // namespace

SubImage crop_upper_right(const GrayImage& img) {
  if (img.height < kCropH || img.width < kCropW)
    throw ImageTooSmall("crop_upper_right: image smaller than the crop");
  SubImage s;
  s.origin_row = 0;
  s.origin_col = img.width - kCropW;
  s.patch = GrayImage(kCropH, kCropW);
  for (int r = 0; r < kCropH; ++r)
    for (int c = 0; c < kCropW; ++c)
      s.patch.at(r, c) = img.at(s.origin_row + r, s.origin_col + c);
  return s;
}

LandingPair make_landing_pair(const Sample& s) {
  LandingPair p;
  p.image = crop_upper_right(s.image);
  for (const Pixel& q : s.contour.points) {
    int r = q.row - p.image.origin_row;
    int c = q.col - p.image.origin_col;
    if (r >= 0 && r < kCropH && c >= 0 && c < kCropW) p.target.points.push_back({r, c});
  }
  if (p.target.points.empty())
    throw EmptyTarget("make_landing_pair: no contour point inside the crop");
  return p;
}

LandingPair flip_augment(const LandingPair& p) {
  LandingPair f;
  f.image.origin_row = p.image.origin_row;
  f.image.origin_col = p.image.origin_col;
  f.image.patch = GrayImage(kCropH, kCropW);
  for (int r = 0; r < kCropH; ++r)
    for (int c = 0; c < kCropW; ++c) f.image.patch.at(r, c) = p.image.patch.at(kCropH - 1 - r, c);
  f.target.points.reserve(p.target.points.size());
  for (const Pixel& q : p.target.points) f.target.points.push_back({kCropH - 1 - q.row, q.col});
  return f;
}

double landing_loss(const Network& net, const std::vector<LandingPair>& pairs) {
  if (pairs.empty()) throw EmptyTarget("landing_loss: no pairs");
  Tensor x = gather_patches(pairs);
  Tensor out = forward(net, x);
  double loss = 0.0;
  for (size_t i = 0; i < pairs.size(); ++i)
    loss += nearest_target(out.ptr() + 2 * i, pairs[i].target, nullptr);
  return loss / static_cast<double>(pairs.size());
}

Gradients loss_gradient(const Network& net, const std::vector<LandingPair>& pairs,
                        double* loss_out) {
  if (pairs.empty()) throw EmptyTarget("loss_gradient: no pairs");
  Tensor x = gather_patches(pairs);
  ForwardCache cache;
  Tensor out = forward(net, x, &cache);
  Tensor dy({static_cast<int>(pairs.size()), 2});
  double loss = 0.0;
  float invb = 1.0f / static_cast<float>(pairs.size());
  for (size_t i = 0; i < pairs.size(); ++i) {
    Pixel nearest;
    double d = nearest_target(out.ptr() + 2 * i, pairs[i].target, &nearest);
    loss += d;
    if (d > 1e-9) {
      // subgradient of the min: gradient of the distance to the nearest point
      dy.data[2 * i] = invb * static_cast<float>(
                                  (static_cast<double>(out.data[2 * i]) - nearest.row) / d);
      dy.data[2 * i + 1] = invb * static_cast<float>(
                                      (static_cast<double>(out.data[2 * i + 1]) - nearest.col) / d);
    }
  }
  Gradients g = make_gradients(net);
  backward(net, cache, dy, g);
  if (loss_out) *loss_out = loss / static_cast<double>(pairs.size());
  return g;
}

LineSearchResult line_search_step(const std::function<double(double)>& phi, double phi0,
                                  const LineSearchConfig& cfg) {
  LineSearchResult res;
  double h = cfg.derivative_step * cfg.lambda_hi;
  auto deriv = [&](double lam) {
    double d = (phi(lam + h) - phi(lam - h)) / (2.0 * h);
    res.evals += 2;
    return d;
  };

  double la = cfg.lambda_lo, lb = cfg.lambda_hi;
  double da = deriv(la), db = deriv(lb);
  for (int it = 0; it < cfg.secant_iterations; ++it) {
    if (!std::isfinite(da) || !std::isfinite(db) || std::fabs(db - da) < 1e-18) break;
    double lc = lb - db * (lb - la) / (db - da);
    lc = std::min(cfg.lambda_hi, std::max(cfg.lambda_lo, lc));
    if (std::fabs(lc - lb) <= cfg.converge_tol * cfg.lambda_hi) {
      lb = lc;
      break;
    }
    la = lb;
    da = db;
    lb = lc;
    db = deriv(lb);
  }

  double cand = phi(lb);
  res.evals += 1;
  if (std::isfinite(cand) && cand < phi0) {
    res.lambda = lb;
    return res;
  }

  // fallback: shrink geometrically until the loss decreases
  double lam = cfg.fallback_lambda;
  for (int s = 0; s < cfg.max_shrinks; ++s) {
    double v = phi(lam);
    res.evals += 1;
    if (std::isfinite(v) && v < phi0) {
      res.lambda = lam;
      return res;
    }
    lam *= 0.5;
  }
  res.stalled = true;
  res.lambda = 0.0;
  return res;
}

LineSearchResult line_search_lr(Network& net, const Gradients& g,
                                const std::vector<LandingPair>& pairs, double phi0,
                                const LineSearchConfig& cfg) {
  std::vector<float> base(net.param_count());
  net.copy_params_to(base.data());
  std::vector<float> flat_g = flatten_gradients(net, g);
  std::vector<float> trial(base.size());

  auto phi = [&](double lam) {
    for (size_t i = 0; i < base.size(); ++i)
      trial[i] = base[i] - static_cast<float>(lam) * flat_g[i];
    net.set_params_from(trial.data());
    return landing_loss(net, pairs);
  };
  LineSearchResult res = line_search_step(phi, phi0, cfg);
  net.set_params_from(base.data());
  return res;
}

TrainGeneratorResult train_generator(Network& net, const std::vector<LandingPair>& train_pairs,
                                     const std::vector<LandingPair>& val_pairs, int iterations,
                                     const LineSearchConfig& ls, const std::string& out_dir,
                                     int start_iteration) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  std::string last_path = (fs::path(out_dir) / "landing_last.ckpt").string();

  TrainGeneratorResult res;
  res.completed_iterations = start_iteration;
  for (int k = start_iteration; k < iterations; ++k) {
    double train_loss = 0.0;
    Gradients g = loss_gradient(net, train_pairs, &train_loss);
    double val_loss = val_pairs.empty() ? 0.0 : landing_loss(net, val_pairs);
    LineSearchResult step = line_search_lr(net, g, train_pairs, train_loss, ls);

    LandingLogRow row;
    row.iteration = k + 1;
    row.train_loss = train_loss;
    row.val_loss = val_loss;
    row.lambda = step.lambda;
    row.evals = step.evals;
    res.log.push_back(row);
    res.final_train_loss = train_loss;

    if (step.stalled) {
      // no direction of descent at this resolution: treat as converged
      CRL_INFO("landing iter " << (k + 1) << " stalled (loss " << train_loss << ")");
      res.stalled = true;
      save_checkpoint(last_path, net, k, {{"train_loss", train_loss}});
      break;
    }
    apply_update(net, g, static_cast<float>(step.lambda), UpdateDirection::descend);
    res.completed_iterations = k + 1;
    save_checkpoint(last_path, net, k + 1, {{"train_loss", train_loss}});
    CRL_INFO("landing iter " << (k + 1) << " loss=" << train_loss << " val=" << val_loss
                             << " lambda=" << step.lambda << " evals=" << step.evals);
  }
  if (res.log.empty()) {
    res.final_train_loss = train_pairs.empty() ? 0.0 : landing_loss(net, train_pairs);
    save_checkpoint(last_path, net, start_iteration, {});
  }
  return res;
}

Pixel predict_landing(const Network& net, const GrayImage& img) {
  SubImage crop = crop_upper_right(img);
  Tensor x({1, kCropH, kCropW, 1});
  std::memcpy(x.ptr(), crop.patch.data.data(),
              static_cast<size_t>(kCropH) * kCropW * sizeof(float));
  Tensor out = forward(net, x);
  long r = std::lround(out.data[0]);  // rounds half away from zero
  long c = std::lround(out.data[1]);
  r = std::min<long>(kCropH - 1, std::max<long>(0, r));
  c = std::min<long>(kCropW - 1, std::max<long>(0, c));
  return {static_cast<int>(r + crop.origin_row), static_cast<int>(c + crop.origin_col)};
}

void write_landing_log_csv(const std::string& path, const std::vector<LandingLogRow>& rows,
                           bool append) {
  std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
  if (!out) throw Error("cannot open for write: " + path);
  if (!append) out << "iteration,train_loss,val_loss,lambda,evals\n";
  char buf[192];
  for (const LandingLogRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%d,%.10g,%.10g,%.10g,%d\n", r.iteration, r.train_loss,
                  r.val_loss, r.lambda, r.evals);
    out << buf;
  }
  if (!out) throw Error("short write: " + path);
}

}  // namespace crl
