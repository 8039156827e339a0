#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "contourrl/kernels.hpp"
#include "contourrl/tensor.hpp"

namespace crl {

enum class LayerKind { conv, pool, relu, fc, softmax, flatten };

struct LayerSpec {
  LayerKind kind;
  int kh = 0, kw = 0, cout = 0;  // conv
  int units = 0;                 // fc
};

struct Layer {
  LayerSpec spec;
  std::vector<int> in_shape, out_shape;  // per sample: {H,W,C} or {n}
  Tensor w, b;  // conv: w is [kh*kw*cin, cout]; fc: w is [in, out]
};

struct Network {
  std::string arch_id;
  uint64_t seed = 0;
  std::vector<int> input_shape;  // {H, W, C}
  std::vector<Layer> layers;
  Engine engine = Engine::fast;

  size_t param_count() const;
  void copy_params_to(float* dst) const;
  void set_params_from(const float* src);
  float get_param(size_t idx) const;
  void add_to_param(size_t idx, float delta);
  const std::vector<int>& output_shape() const { return layers.back().out_shape; }
};

// builds the network and initialises weights He-uniform (biases zero) from
// the seed
Network build_network(std::string arch_id, std::vector<int> input_shape,
                      const std::vector<LayerSpec>& specs, uint64_t seed,
                      Engine engine = Engine::fast);

// the three fixed architectures
Network policy_network(uint64_t seed, Engine engine = Engine::fast);   // 21x21x1 -> 8 softmax
Network value_network(uint64_t seed, Engine engine = Engine::fast);    // 21x21x1 -> 1 linear
Network landing_network(uint64_t seed, Engine engine = Engine::fast);  // 100x80x1 -> 2 linear

// per-layer activations retained for backward; each entry is exactly what
// that layer's backward needs (conv/fc/relu keep their input, softmax keeps
// its output, pool keeps argmax indices)
struct ForwardCache {
  int batch = 0;
  std::vector<Tensor> saved;
  std::vector<std::vector<uint8_t>> pool_argmax;
};

// forward pass over a batch; x is [B, ...input_shape].  When `signature` is
// non-null it receives a hash of every branch decision (relu signs, pool
// argmaxes), used by grad_check to discard finite-difference probes that
// cross a kink.
Tensor forward(const Network& net, const Tensor& x, ForwardCache* cache = nullptr,
               uint64_t* signature = nullptr);

struct Gradients {
  std::vector<Tensor> w, b;  // parallel to net.layers, empty where no params
  void zero();
  void add(const Gradients& other);
};

Gradients make_gradients(const Network& net);

// accumulates parameter gradients for a batch; dy is the loss gradient at
// the network output, [B, ...output_shape]
void backward(const Network& net, const ForwardCache& cache, const Tensor& dy,
              Gradients& grads);

enum class UpdateDirection { ascend, descend };

void apply_update(Network& net, const Gradients& g, float lr, UpdateDirection dir);

struct GradCheckResult {
  double max_rel_error = 0.0;
  int checked = 0;
  int skipped = 0;  // probes discarded because a relu/pool branch flipped
};

// central-difference check of backward on a random quadratic loss; probes
// are evaluated through a double-precision reference forward so tiny
// gradients stay above the finite-difference noise floor; checks every
// parameter when there are at most max_params, otherwise a random subset
GradCheckResult grad_check(Network& net, const Tensor& x, uint64_t seed, double eps,
                           int max_params);

// checkpoint: magic + json header (architecture, seed, iteration, meta) +
// raw little-endian float32 parameter block; round-trips bit-exactly
void save_checkpoint(const std::string& path, const Network& net, int64_t iteration,
                     const std::map<std::string, double>& meta = {});

struct Checkpoint {
  Network net;
  int64_t iteration = 0;
  std::map<std::string, double> meta;
};

Checkpoint load_checkpoint(const std::string& path, Engine engine = Engine::fast);

}  // namespace crl
