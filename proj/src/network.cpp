#include "contourrl/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "contourrl/errors.hpp"
#include "contourrl/random.hpp"

using nlohmann::json;

namespace crl {

namespace {

int shape_numel(const std::vector<int>& s) {
  int n = 1;
  for (int d : s) n *= d;
  return n;
}

uint64_t fnv1a(uint64_t h, const void* data, size_t n) {
  const uint8_t* p = static_cast<const uint8_t*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr uint64_t kFnvBasis = 0xcbf29ce484222325ULL;

const char* kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::conv: return "conv";
    case LayerKind::pool: return "pool";
    case LayerKind::relu: return "relu";
    case LayerKind::fc: return "fc";
    case LayerKind::softmax: return "softmax";
    case LayerKind::flatten: return "flatten";
  }
  return "?";
}

LayerKind kind_from_name(const std::string& s) {
  if (s == "conv") return LayerKind::conv;
  if (s == "pool") return LayerKind::pool;
  if (s == "relu") return LayerKind::relu;
  if (s == "fc") return LayerKind::fc;
  if (s == "softmax") return LayerKind::softmax;
  if (s == "flatten") return LayerKind::flatten;
  throw ParseError("unknown layer kind '" + s + "'", 0);
}

}  // namespace

size_t Network::param_count() const {
  size_t n = 0;
  for (const Layer& l : layers) n += l.w.numel() + l.b.numel();
  return n;
}

void Network::copy_params_to(float* dst) const {
  size_t off = 0;
  for (const Layer& l : layers) {
    std::memcpy(dst + off, l.w.ptr(), l.w.numel() * sizeof(float));
    off += l.w.numel();
    std::memcpy(dst + off, l.b.ptr(), l.b.numel() * sizeof(float));
    off += l.b.numel();
  }
}

void Network::set_params_from(const float* src) {
  size_t off = 0;
  for (Layer& l : layers) {
    std::memcpy(l.w.ptr(), src + off, l.w.numel() * sizeof(float));
    off += l.w.numel();
    std::memcpy(l.b.ptr(), src + off, l.b.numel() * sizeof(float));
    off += l.b.numel();
  }
}

float Network::get_param(size_t idx) const {
  for (const Layer& l : layers) {
    if (idx < l.w.numel()) return l.w.data[idx];
    idx -= l.w.numel();
    if (idx < l.b.numel()) return l.b.data[idx];
    idx -= l.b.numel();
  }
  throw BoundsError("get_param: index out of range");
}

void Network::add_to_param(size_t idx, float delta) {
  for (Layer& l : layers) {
    if (idx < l.w.numel()) {
      l.w.data[idx] += delta;
      return;
    }
    idx -= l.w.numel();
    if (idx < l.b.numel()) {
      l.b.data[idx] += delta;
      return;
    }
    idx -= l.b.numel();
  }
  throw BoundsError("add_to_param: index out of range");
}

Network build_network(std::string arch_id, std::vector<int> input_shape,
                      const std::vector<LayerSpec>& specs, uint64_t seed, Engine engine) {
  Network net;
  net.arch_id = std::move(arch_id);
  net.seed = seed;
  net.input_shape = std::move(input_shape);
  net.engine = engine;

  std::vector<int> shape = net.input_shape;
  for (const LayerSpec& s : specs) {
    Layer l;
    l.spec = s;
    l.in_shape = shape;
    switch (s.kind) {
      case LayerKind::conv: {
        if (shape.size() != 3) throw ShapeMismatch("conv needs an HWC input");
        int h = shape[0], w = shape[1], c = shape[2];
        if (h < s.kh || w < s.kw) throw ShapeMismatch("conv kernel larger than input");
        l.w = Tensor({s.kh * s.kw * c, s.cout});
        l.b = Tensor({s.cout});
        shape = {h - s.kh + 1, w - s.kw + 1, s.cout};
        break;
      }
      case LayerKind::pool: {
        if (shape.size() != 3) throw ShapeMismatch("pool needs an HWC input");
        shape = {shape[0] / 2, shape[1] / 2, shape[2]};
        break;
      }
      case LayerKind::flatten: {
        shape = {shape_numel(shape)};
        break;
      }
      case LayerKind::fc: {
        if (shape.size() != 1) throw ShapeMismatch("fc needs a flat input");
        l.w = Tensor({shape[0], s.units});
        l.b = Tensor({s.units});
        shape = {s.units};
        break;
      }
      case LayerKind::relu:
      case LayerKind::softmax:
        break;
    }
    l.out_shape = shape;
    net.layers.push_back(std::move(l));
  }

  // He-uniform initialisation, biases zero
  Rng rng(seed);
  for (Layer& l : net.layers) {
    if (l.w.numel() == 0) continue;
    int fan_in = l.spec.kind == LayerKind::conv
                     ? l.spec.kh * l.spec.kw * l.in_shape[2]
                     : l.in_shape[0];
    float limit = std::sqrt(6.0f / static_cast<float>(fan_in));
    for (float& v : l.w.data) v = static_cast<float>(rng.uniform(-limit, limit));
  }
  return net;
}

Network policy_network(uint64_t seed, Engine engine) {
  return build_network("policy", {21, 21, 1},
                       {{LayerKind::conv, 5, 5, 16},
                        {LayerKind::relu},
                        {LayerKind::pool},
                        {LayerKind::conv, 3, 3, 64},
                        {LayerKind::relu},
                        {LayerKind::pool},
                        {LayerKind::flatten},
                        {LayerKind::fc, 0, 0, 0, 256},
                        {LayerKind::relu},
                        {LayerKind::fc, 0, 0, 0, 64},
                        {LayerKind::relu},
                        {LayerKind::fc, 0, 0, 0, 8},
                        {LayerKind::softmax}},
                       seed, engine);
}

Network value_network(uint64_t seed, Engine engine) {
  return build_network("value", {21, 21, 1},
                       {{LayerKind::conv, 5, 5, 16},
                        {LayerKind::relu},
                        {LayerKind::pool},
                        {LayerKind::conv, 3, 3, 64},
                        {LayerKind::relu},
                        {LayerKind::pool},
                        {LayerKind::flatten},
                        {LayerKind::fc, 0, 0, 0, 256},
                        {LayerKind::relu},
                        {LayerKind::fc, 0, 0, 0, 64},
                        {LayerKind::relu},
                        {LayerKind::fc, 0, 0, 0, 1}},
                       seed, engine);
}

Network landing_network(uint64_t seed, Engine engine) {
  return build_network("landing", {100, 80, 1},
                       {{LayerKind::conv, 5, 5, 32},
                        {LayerKind::relu},
                        {LayerKind::pool},
                        {LayerKind::conv, 5, 5, 64},
                        {LayerKind::relu},
                        {LayerKind::pool},
                        {LayerKind::conv, 5, 5, 64},
                        {LayerKind::relu},
                        {LayerKind::pool},
                        {LayerKind::flatten},
                        {LayerKind::fc, 0, 0, 0, 1024},
                        {LayerKind::relu},
                        {LayerKind::fc, 0, 0, 0, 64},
                        {LayerKind::relu},
                        {LayerKind::fc, 0, 0, 0, 2}},
                       seed, engine);
}

Tensor forward(const Network& net, const Tensor& x, ForwardCache* cache,
               uint64_t* signature) {
  int batch = x.shape.empty() ? 0 : x.shape[0];
  if (Tensor::numel_of(x.shape) !=
      static_cast<size_t>(batch) * shape_numel(net.input_shape))
    throw ShapeMismatch("forward: input shape does not match network input");

  uint64_t sig = kFnvBasis;
  if (cache) {
    cache->batch = batch;
    cache->saved.assign(net.layers.size(), Tensor());
    cache->pool_argmax.assign(net.layers.size(), {});
  }

  Tensor cur = x;
  for (size_t li = 0; li < net.layers.size(); ++li) {
    const Layer& l = net.layers[li];
    std::vector<int> out_shape = l.out_shape;
    out_shape.insert(out_shape.begin(), batch);
    switch (l.spec.kind) {
      case LayerKind::conv: {
        ConvDims d{batch, l.in_shape[0], l.in_shape[1], l.in_shape[2],
                   l.spec.kh, l.spec.kw, l.spec.cout};
        Tensor y(out_shape);
        conv2d_forward(net.engine, d, cur.ptr(), l.w.ptr(), l.b.ptr(), y.ptr());
        if (cache) cache->saved[li] = std::move(cur);
        cur = std::move(y);
        break;
      }
      case LayerKind::pool: {
        Tensor y(out_shape);
        std::vector<uint8_t> am(y.numel());
        maxpool2_forward(net.engine, batch, l.in_shape[0], l.in_shape[1], l.in_shape[2],
                         cur.ptr(), y.ptr(), am.data());
        if (signature) sig = fnv1a(sig, am.data(), am.size());
        if (cache) cache->pool_argmax[li] = std::move(am);
        cur = std::move(y);
        break;
      }
      case LayerKind::relu: {
        Tensor y(out_shape);
        relu_forward(cur.ptr(), y.ptr(), cur.numel());
        if (signature) {
          std::vector<uint8_t> bits(cur.numel());
          for (size_t i = 0; i < cur.numel(); ++i) bits[i] = cur.data[i] > 0.0f;
          sig = fnv1a(sig, bits.data(), bits.size());
        }
        if (cache) cache->saved[li] = std::move(cur);
        cur = std::move(y);
        break;
      }
      case LayerKind::flatten: {
        cur.reshape(out_shape);
        break;
      }
      case LayerKind::fc: {
        Tensor y(out_shape);
        fc_forward(net.engine, batch, l.in_shape[0], l.spec.units, cur.ptr(), l.w.ptr(),
                   l.b.ptr(), y.ptr());
        if (cache) cache->saved[li] = std::move(cur);
        cur = std::move(y);
        break;
      }
      case LayerKind::softmax: {
        Tensor y(out_shape);
        softmax_forward(batch, l.in_shape[0], cur.ptr(), y.ptr());
        if (cache) cache->saved[li] = y;  // backward needs the output
        cur = std::move(y);
        break;
      }
    }
  }
  if (signature) *signature = sig;
  return cur;
}

Gradients make_gradients(const Network& net) {
  Gradients g;
  g.w.resize(net.layers.size());
  g.b.resize(net.layers.size());
  for (size_t i = 0; i < net.layers.size(); ++i) {
    if (net.layers[i].w.numel()) {
      g.w[i] = Tensor(net.layers[i].w.shape);
      g.b[i] = Tensor(net.layers[i].b.shape);
    }
  }
  return g;
}

void Gradients::zero() {
  for (Tensor& t : w) std::fill(t.data.begin(), t.data.end(), 0.0f);
  for (Tensor& t : b) std::fill(t.data.begin(), t.data.end(), 0.0f);
}

void Gradients::add(const Gradients& other) {
  for (size_t i = 0; i < w.size(); ++i) {
    for (size_t j = 0; j < w[i].numel(); ++j) w[i].data[j] += other.w[i].data[j];
    for (size_t j = 0; j < b[i].numel(); ++j) b[i].data[j] += other.b[i].data[j];
  }
}

void backward(const Network& net, const ForwardCache& cache, const Tensor& dy,
              Gradients& grads) {
  int batch = cache.batch;
  Tensor cur = dy;
  for (size_t li = net.layers.size(); li-- > 0;) {
    const Layer& l = net.layers[li];
    std::vector<int> in_shape = l.in_shape;
    in_shape.insert(in_shape.begin(), batch);
    switch (l.spec.kind) {
      case LayerKind::conv: {
        ConvDims d{batch, l.in_shape[0], l.in_shape[1], l.in_shape[2],
                   l.spec.kh, l.spec.kw, l.spec.cout};
        // input gradient is not needed below the first layer
        if (li == 0) {
          conv2d_backward(net.engine, d, cache.saved[li].ptr(), l.w.ptr(), cur.ptr(),
                          nullptr, grads.w[li].ptr(), grads.b[li].ptr());
          return;
        }
        Tensor dx(in_shape);
        conv2d_backward(net.engine, d, cache.saved[li].ptr(), l.w.ptr(), cur.ptr(),
                        dx.ptr(), grads.w[li].ptr(), grads.b[li].ptr());
        cur = std::move(dx);
        break;
      }
      case LayerKind::pool: {
        Tensor dx(in_shape);
        maxpool2_backward(net.engine, batch, l.in_shape[0], l.in_shape[1], l.in_shape[2],
                          cache.pool_argmax[li].data(), cur.ptr(), dx.ptr());
        cur = std::move(dx);
        break;
      }
      case LayerKind::relu: {
        Tensor dx(in_shape);
        relu_backward(cache.saved[li].ptr(), cur.ptr(), dx.ptr(), cur.numel());
        cur = std::move(dx);
        break;
      }
      case LayerKind::flatten: {
        cur.reshape(in_shape);
        break;
      }
      case LayerKind::fc: {
        if (li == 0) {
          fc_backward(net.engine, batch, l.in_shape[0], l.spec.units,
                      cache.saved[li].ptr(), l.w.ptr(), cur.ptr(), nullptr,
                      grads.w[li].ptr(), grads.b[li].ptr());
          return;
        }
        Tensor dx(in_shape);
        fc_backward(net.engine, batch, l.in_shape[0], l.spec.units, cache.saved[li].ptr(),
                    l.w.ptr(), cur.ptr(), dx.ptr(), grads.w[li].ptr(), grads.b[li].ptr());
        cur = std::move(dx);
        break;
      }
      case LayerKind::softmax: {
        Tensor dx(in_shape);
        softmax_backward(batch, l.in_shape[0], cache.saved[li].ptr(), cur.ptr(), dx.ptr());
        cur = std::move(dx);
        break;
      }
    }
  }
}

void apply_update(Network& net, const Gradients& g, float lr, UpdateDirection dir) {
  float s = dir == UpdateDirection::ascend ? lr : -lr;
  for (size_t i = 0; i < net.layers.size(); ++i) {
    Layer& l = net.layers[i];
    for (size_t j = 0; j < l.w.numel(); ++j) l.w.data[j] += s * g.w[i].data[j];
    for (size_t j = 0; j < l.b.numel(); ++j) l.b.data[j] += s * g.b[i].data[j];
  }
}

namespace {

// Double-precision reference forward used only by grad_check.  Probing the
// float32 forward drowns small gradients in evaluation noise (the loss is
// only reproducible to ~1e-7 relative, and dividing by 2*eps amplifies
// that), so finite differences run through this path instead.  It mirrors
// the float forward exactly: same layer semantics, same pool tie rule, and
// the same branch-signature hashing over relu signs and pool argmaxes.
struct ParamsD {
  std::vector<std::vector<double>> w, b;
};

ParamsD params_double(const Network& net) {
  ParamsD p;
  p.w.resize(net.layers.size());
  p.b.resize(net.layers.size());
  for (size_t i = 0; i < net.layers.size(); ++i) {
    p.w[i].assign(net.layers[i].w.data.begin(), net.layers[i].w.data.end());
    p.b[i].assign(net.layers[i].b.data.begin(), net.layers[i].b.data.end());
  }
  return p;
}

std::vector<double> forward_double(const Network& net, const ParamsD& p, const Tensor& x,
                                   uint64_t* signature) {
  int batch = x.shape[0];
  std::vector<double> cur(x.data.begin(), x.data.end());
  std::vector<double> next;
  uint64_t sig = kFnvBasis;
  for (size_t li = 0; li < net.layers.size(); ++li) {
    const Layer& l = net.layers[li];
    switch (l.spec.kind) {
      case LayerKind::conv: {
        int h = l.in_shape[0], w = l.in_shape[1], cin = l.in_shape[2];
        int ho = l.out_shape[0], wo = l.out_shape[1], cout = l.spec.cout;
        int kh = l.spec.kh, kw = l.spec.kw;
        next.assign(static_cast<size_t>(batch) * ho * wo * cout, 0.0);
#pragma omp parallel for collapse(2) schedule(static)
        for (int b = 0; b < batch; ++b)
          for (int oy = 0; oy < ho; ++oy)
            for (int ox = 0; ox < wo; ++ox)
              for (int co = 0; co < cout; ++co) {
                double s = p.b[li][co];
                for (int kr = 0; kr < kh; ++kr)
                  for (int kc = 0; kc < kw; ++kc)
                    for (int ci = 0; ci < cin; ++ci)
                      s += cur[((static_cast<size_t>(b) * h + oy + kr) * w + ox + kc) * cin +
                               ci] *
                           p.w[li][(static_cast<size_t>(kr) * kw + kc) * cin * cout +
                                   static_cast<size_t>(ci) * cout + co];
                next[((static_cast<size_t>(b) * ho + oy) * wo + ox) * cout + co] = s;
              }
        cur.swap(next);
        break;
      }
      case LayerKind::pool: {
        int h = l.in_shape[0], w = l.in_shape[1], c = l.in_shape[2];
        int ho = h / 2, wo = w / 2;
        next.assign(static_cast<size_t>(batch) * ho * wo * c, 0.0);
        std::vector<uint8_t> am(next.size());
        for (int b = 0; b < batch; ++b)
          for (int oy = 0; oy < ho; ++oy)
            for (int ox = 0; ox < wo; ++ox)
              for (int ch = 0; ch < c; ++ch) {
                double best = 0.0;
                uint8_t bi = 0;
                for (uint8_t k = 0; k < 4; ++k) {
                  int dr = k >> 1, dc = k & 1;
                  double v = cur[((static_cast<size_t>(b) * h + 2 * oy + dr) * w + 2 * ox +
                                  dc) *
                                     c +
                                 ch];
                  if (k == 0 || v > best) {
                    best = v;
                    bi = k;
                  }
                }
                size_t yi = ((static_cast<size_t>(b) * ho + oy) * wo + ox) * c + ch;
                next[yi] = best;
                am[yi] = bi;
              }
        if (signature) sig = fnv1a(sig, am.data(), am.size());
        cur.swap(next);
        break;
      }
      case LayerKind::relu: {
        if (signature) {
          std::vector<uint8_t> bits(cur.size());
          for (size_t i = 0; i < cur.size(); ++i) bits[i] = cur[i] > 0.0;
          sig = fnv1a(sig, bits.data(), bits.size());
        }
        for (double& v : cur) v = v > 0.0 ? v : 0.0;
        break;
      }
      case LayerKind::flatten:
        break;
      case LayerKind::fc: {
        int in = l.in_shape[0], out = l.spec.units;
        next.assign(static_cast<size_t>(batch) * out, 0.0);
        for (int b = 0; b < batch; ++b)
          for (int o = 0; o < out; ++o) {
            double s = p.b[li][o];
            for (int i = 0; i < in; ++i)
              s += cur[static_cast<size_t>(b) * in + i] *
                   p.w[li][static_cast<size_t>(i) * out + o];
            next[static_cast<size_t>(b) * out + o] = s;
          }
        cur.swap(next);
        break;
      }
      case LayerKind::softmax: {
        int n = l.in_shape[0];
        for (int b = 0; b < batch; ++b) {
          double* row = cur.data() + static_cast<size_t>(b) * n;
          double m = row[0];
          for (int i = 1; i < n; ++i) m = std::max(m, row[i]);
          double sum = 0.0;
          for (int i = 0; i < n; ++i) {
            row[i] = std::exp(row[i] - m);
            sum += row[i];
          }
          for (int i = 0; i < n; ++i) row[i] /= sum;
        }
        break;
      }
    }
  }
  if (signature) *signature = sig;
  return cur;
}

}  // namespace

GradCheckResult grad_check(Network& net, const Tensor& x, uint64_t seed, double eps,
                           int max_params) {
  // quadratic loss 0.5 * sum (out - target)^2 against a random target
  Tensor out0 = forward(net, x);
  Rng rng(seed);
  Tensor target(out0.shape);
  for (float& v : target.data) v = static_cast<float>(rng.uniform());

  ForwardCache cache;
  Tensor out = forward(net, x, &cache);
  Tensor dy(out.shape);
  for (size_t i = 0; i < out.numel(); ++i) dy.data[i] = out.data[i] - target.data[i];
  Gradients grads = make_gradients(net);
  backward(net, cache, dy, grads);

  std::vector<float> flat_grad(net.param_count());
  {
    size_t off = 0;
    for (size_t i = 0; i < net.layers.size(); ++i) {
      const Layer& l = net.layers[i];
      if (l.w.numel()) {
        std::memcpy(flat_grad.data() + off, grads.w[i].ptr(), l.w.numel() * sizeof(float));
        off += l.w.numel();
        std::memcpy(flat_grad.data() + off, grads.b[i].ptr(), l.b.numel() * sizeof(float));
        off += l.b.numel();
      } else {
        off += l.w.numel() + l.b.numel();
      }
    }
  }

  size_t n = net.param_count();
  std::vector<size_t> picks;
  if (n <= static_cast<size_t>(max_params)) {
    picks.resize(n);
    for (size_t i = 0; i < n; ++i) picks[i] = i;
  } else {
    std::set<size_t> chosen;
    while (chosen.size() < static_cast<size_t>(max_params))
      chosen.insert(static_cast<size_t>(rng.next_u64() % n));
    picks.assign(chosen.begin(), chosen.end());
  }

  // probes run on a double-precision copy of the parameters so finite
  // differences stay meaningful even where the gradient is tiny; the float
  // backward under test supplies only the analytic side
  ParamsD base = params_double(net);
  auto loss_at = [&](uint64_t* sig) {
    std::vector<double> out = forward_double(net, base, x, sig);
    double s = 0.0;
    for (size_t i = 0; i < out.size(); ++i) {
      double d = out[i] - static_cast<double>(target.data[i]);
      s += 0.5 * d * d;
    }
    return s;
  };
  // flat index -> slot in the per-layer (weights, then biases) order
  auto slot_of = [&](size_t idx) -> double* {
    for (size_t li = 0; li < net.layers.size(); ++li) {
      if (idx < base.w[li].size()) return &base.w[li][idx];
      idx -= base.w[li].size();
      if (idx < base.b[li].size()) return &base.b[li][idx];
      idx -= base.b[li].size();
    }
    throw BoundsError("grad_check: parameter index out of range");
  };

  GradCheckResult res;
  for (size_t idx : picks) {
    double* slot = slot_of(idx);
    double orig = *slot;
    uint64_t sig_plus = 0, sig_minus = 0;
    *slot = orig + eps;
    double lp = loss_at(&sig_plus);
    *slot = orig - eps;
    double lm = loss_at(&sig_minus);
    *slot = orig;
    if (sig_plus != sig_minus) {
      // the probe crossed a relu/pool kink; finite differences are invalid
      res.skipped += 1;
      continue;
    }
    double numeric = (lp - lm) / (2.0 * eps);
    double analytic = flat_grad[idx];
    double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-6});
    double rel = std::fabs(analytic - numeric) / denom;
    res.max_rel_error = std::max(res.max_rel_error, rel);
    res.checked += 1;
  }
  return res;
}

void save_checkpoint(const std::string& path, const Network& net, int64_t iteration,
                     const std::map<std::string, double>& meta) {
  json layers = json::array();
  for (const Layer& l : net.layers) {
    json e{{"kind", kind_name(l.spec.kind)}};
    if (l.spec.kind == LayerKind::conv) {
      e["kh"] = l.spec.kh;
      e["kw"] = l.spec.kw;
      e["cout"] = l.spec.cout;
    } else if (l.spec.kind == LayerKind::fc) {
      e["units"] = l.spec.units;
    }
    layers.push_back(e);
  }
  json header{{"format", 1},
              {"arch", net.arch_id},
              {"input", net.input_shape},
              {"layers", layers},
              {"seed", net.seed},
              {"iteration", iteration},
              {"meta", meta}};
  std::string hs = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open for write: " + path);
  out.write("CRLCKPT1", 8);
  uint64_t len = hs.size();
  uint8_t lenb[8];
  for (int i = 0; i < 8; ++i) lenb[i] = static_cast<uint8_t>((len >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(lenb), 8);
  out.write(hs.data(), hs.size());
  std::vector<float> params(net.param_count());
  net.copy_params_to(params.data());
  out.write(reinterpret_cast<const char*>(params.data()), params.size() * sizeof(float));
  if (!out) throw Error("short write: " + path);
}

Checkpoint load_checkpoint(const std::string& path, Engine engine) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open: " + path);
  char magic[8];
  in.read(magic, 8);
  if (in.gcount() != 8 || std::memcmp(magic, "CRLCKPT1", 8) != 0)
    throw ParseError("bad checkpoint magic", 0);
  uint8_t lenb[8];
  in.read(reinterpret_cast<char*>(lenb), 8);
  if (in.gcount() != 8) throw ParseError("truncated checkpoint header length", 8);
  uint64_t len = 0;
  for (int i = 0; i < 8; ++i) len |= static_cast<uint64_t>(lenb[i]) << (8 * i);
  if (len > (1u << 20)) throw ParseError("implausible checkpoint header length", 8);
  std::string hs(len, '\0');
  in.read(hs.data(), static_cast<std::streamsize>(len));
  if (static_cast<uint64_t>(in.gcount()) != len)
    throw ParseError("truncated checkpoint header", 16);
  json header;
  try {
    header = json::parse(hs);
  } catch (const json::exception& ex) {
    throw ParseError(std::string("bad checkpoint header: ") + ex.what(), 16);
  }

  std::vector<LayerSpec> specs;
  for (const json& e : header.at("layers")) {
    LayerSpec s{kind_from_name(e.at("kind").get<std::string>())};
    if (s.kind == LayerKind::conv) {
      s.kh = e.at("kh").get<int>();
      s.kw = e.at("kw").get<int>();
      s.cout = e.at("cout").get<int>();
    } else if (s.kind == LayerKind::fc) {
      s.units = e.at("units").get<int>();
    }
    specs.push_back(s);
  }
  Checkpoint ck;
  ck.net = build_network(header.at("arch").get<std::string>(),
                         header.at("input").get<std::vector<int>>(), specs,
                         header.at("seed").get<uint64_t>(), engine);
  ck.iteration = header.at("iteration").get<int64_t>();
  if (header.contains("meta"))
    ck.meta = header.at("meta").get<std::map<std::string, double>>();

  std::vector<float> params(ck.net.param_count());
  in.read(reinterpret_cast<char*>(params.data()),
          static_cast<std::streamsize>(params.size() * sizeof(float)));
  if (static_cast<size_t>(in.gcount()) != params.size() * sizeof(float))
    throw ParseError("truncated checkpoint parameters", 16 + static_cast<long>(len));
  ck.net.set_params_from(params.data());
  return ck;
}

}  // namespace crl
