// serial reference vs tiled OpenMP kernels, plus whole-network forward passes
#include <benchmark/benchmark.h>

#include <vector>

#include "contourrl/kernels.hpp"
#include "contourrl/network.hpp"
#include "contourrl/random.hpp"
#include "contourrl/tensor.hpp"

namespace {

using crl::Engine;

std::vector<float> random_vec(size_t n, uint64_t seed) {
  crl::Rng rng(seed);
  std::vector<float> v(n);
  for (float& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  return v;
}

void bench_gemm(benchmark::State& state, Engine eng) {
  int M = static_cast<int>(state.range(0));
  int N = static_cast<int>(state.range(1));
  int K = static_cast<int>(state.range(2));
  auto A = random_vec(static_cast<size_t>(M) * K, 1);
  auto B = random_vec(static_cast<size_t>(K) * N, 2);
  std::vector<float> C(static_cast<size_t>(M) * N);
  for (auto _ : state) {
    crl::gemm(eng, M, N, K, A.data(), B.data(), C.data(), false);
    benchmark::DoNotOptimize(C.data());
  }
  state.counters["GFLOP/s"] = benchmark::Counter(
      2.0 * M * N * K * static_cast<double>(state.iterations()), benchmark::Counter::kIsRate,
      benchmark::Counter::kIs1000);
}

void bench_conv_forward(benchmark::State& state, Engine eng) {
  crl::ConvDims d;
  d.batch = static_cast<int>(state.range(0));
  d.h = 21, d.w = 21, d.cin = 1, d.kh = 5, d.kw = 5, d.cout = 16;
  auto x = random_vec(static_cast<size_t>(d.batch) * d.h * d.w * d.cin, 3);
  auto w = random_vec(static_cast<size_t>(d.patch()) * d.cout, 4);
  auto b = random_vec(d.cout, 5);
  std::vector<float> y(static_cast<size_t>(d.batch) * d.out_h() * d.out_w() * d.cout);
  for (auto _ : state) {
    crl::conv2d_forward(eng, d, x.data(), w.data(), b.data(), y.data());
    benchmark::DoNotOptimize(y.data());
  }
  double flops = 2.0 * d.batch * d.out_h() * d.out_w() * d.patch() * d.cout;
  state.counters["GFLOP/s"] = benchmark::Counter(flops * state.iterations(),
                                                 benchmark::Counter::kIsRate,
                                                 benchmark::Counter::kIs1000);
}

void bench_pool(benchmark::State& state, Engine eng) {
  int B = static_cast<int>(state.range(0)), h = 34, w = 34, c = 64;
  auto x = random_vec(static_cast<size_t>(B) * h * w * c, 6);
  std::vector<float> y(static_cast<size_t>(B) * (h / 2) * (w / 2) * c);
  std::vector<uint8_t> am(y.size());
  for (auto _ : state) {
    crl::maxpool2_forward(eng, B, h, w, c, x.data(), y.data(), am.data());
    benchmark::DoNotOptimize(y.data());
  }
}

void bench_fc(benchmark::State& state, Engine eng) {
  int B = static_cast<int>(state.range(0)), in = 3456, out = 1024;
  auto x = random_vec(static_cast<size_t>(B) * in, 7);
  auto w = random_vec(static_cast<size_t>(in) * out, 8);
  auto b = random_vec(out, 9);
  std::vector<float> y(static_cast<size_t>(B) * out);
  for (auto _ : state) {
    crl::fc_forward(eng, B, in, out, x.data(), w.data(), b.data(), y.data());
    benchmark::DoNotOptimize(y.data());
  }
  state.counters["GFLOP/s"] = benchmark::Counter(
      2.0 * B * in * out * static_cast<double>(state.iterations()), benchmark::Counter::kIsRate,
      benchmark::Counter::kIs1000);
}

void bench_policy_forward(benchmark::State& state, Engine eng) {
  int B = static_cast<int>(state.range(0));
  crl::Network net = crl::policy_network(11, eng);
  crl::Tensor x({B, 21, 21, 1});
  x.data = random_vec(x.data.size(), 10);
  for (auto _ : state) {
    crl::Tensor y = crl::forward(net, x);
    benchmark::DoNotOptimize(y.data.data());
  }
}

void bench_landing_forward(benchmark::State& state, Engine eng) {
  int B = static_cast<int>(state.range(0));
  crl::Network net = crl::landing_network(12, eng);
  crl::Tensor x({B, 100, 80, 1});
  x.data = random_vec(x.data.size(), 13);
  for (auto _ : state) {
    crl::Tensor y = crl::forward(net, x);
    benchmark::DoNotOptimize(y.data.data());
  }
}

}  // namespace

BENCHMARK_CAPTURE(bench_gemm, serial, Engine::serial)->Args({256, 256, 256});
BENCHMARK_CAPTURE(bench_gemm, fast, Engine::fast)
    ->Args({256, 256, 256})
    ->Args({1024, 1024, 1024})
    ->Args({9216, 25, 16})
    ->Args({2048, 576, 256});
BENCHMARK_CAPTURE(bench_conv_forward, serial, Engine::serial)->Arg(64);
BENCHMARK_CAPTURE(bench_conv_forward, fast, Engine::fast)->Arg(64)->Arg(512);
BENCHMARK_CAPTURE(bench_pool, serial, Engine::serial)->Arg(64);
BENCHMARK_CAPTURE(bench_pool, fast, Engine::fast)->Arg(64);
BENCHMARK_CAPTURE(bench_fc, serial, Engine::serial)->Arg(16);
BENCHMARK_CAPTURE(bench_fc, fast, Engine::fast)->Arg(16);
BENCHMARK_CAPTURE(bench_policy_forward, serial, Engine::serial)->Arg(256);
BENCHMARK_CAPTURE(bench_policy_forward, fast, Engine::fast)->Arg(256);
BENCHMARK_CAPTURE(bench_landing_forward, serial, Engine::serial)->Arg(8);
BENCHMARK_CAPTURE(bench_landing_forward, fast, Engine::fast)->Arg(8);

BENCHMARK_MAIN();
