#include <benchmark/benchmark.h>

#include <random>

#include "tempnet/train.hpp"

using namespace tempnet;

namespace {

TempNetConfig bench_config(std::size_t h, std::size_t w) {
  TempNetConfig cfg;
  cfg.input_shape = {20, h, w, 1};
  return cfg;
}

Tensor<float> clip(const TempNetConfig& cfg) {
  std::mt19937_64 rng(9);
  std::normal_distribution<float> d(0.0f, 0.1f);
  Tensor<float> x(cfg.input());
  for (auto& v : x.data()) v = d(rng);
  return x;
}

// Args: input H, W.
void BM_NetworkForward(benchmark::State& state) {
  const auto cfg = bench_config(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)));
  const auto net = TempNet<float>::build(cfg, 1);
  const auto x = clip(cfg);
  for (auto _ : state) benchmark::DoNotOptimize(net.predict(x));
}
BENCHMARK(BM_NetworkForward)->Args({75, 100})->Args({150, 200})->Unit(benchmark::kMillisecond);

void BM_NetworkForwardBackward(benchmark::State& state) {
  const auto cfg = bench_config(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)));
  const auto net = TempNet<float>::build(cfg, 1);
  const LabeledClip sample{"bench", clip(cfg), 1};
  const std::vector<const LabeledClip*> batch{&sample};
  for (auto _ : state) benchmark::DoNotOptimize(batch_gradients(net, batch, 1));
}
BENCHMARK(BM_NetworkForwardBackward)->Args({75, 100})->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
