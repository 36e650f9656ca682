#include <benchmark/benchmark.h>

#include <random>

#include "tempnet/kernels.hpp"
#include "tempnet/preproc.hpp"

using namespace tempnet;

namespace {

Tensor<float> noise(const Shape& shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> d(-1.0f, 1.0f);
  Tensor<float> t(shape);
  for (auto& v : t.data()) v = d(rng);
  return t;
}

// Args: spatial extent (H = W), channels in = out.
void BM_Conv3dForward(benchmark::State& state) {
  const auto hw = static_cast<std::size_t>(state.range(0));
  const auto c = static_cast<std::size_t>(state.range(1));
  const auto x = noise(Shape{20, hw, hw, c}, 1);
  const auto k = noise(Shape{3, 3, 3, c, c}, 2);
  const auto b = noise(Shape{c}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::conv3d_forward(x, k, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(20 * hw * hw * c * c * 27));
}
BENCHMARK(BM_Conv3dForward)->Args({38, 16})->Args({75, 16})->Args({19, 16})->Unit(benchmark::kMillisecond);

void BM_Conv3dBackward(benchmark::State& state) {
  const auto hw = static_cast<std::size_t>(state.range(0));
  const auto c = static_cast<std::size_t>(state.range(1));
  const auto x = noise(Shape{20, hw, hw, c}, 1);
  const auto k = noise(Shape{3, 3, 3, c, c}, 2);
  const auto g = noise(Shape{20, hw, hw, c}, 3);
  Tensor<float> gk(k.shape()), gb(Shape{c});
  for (auto _ : state) {
    benchmark::DoNotOptimize(kernels::conv3d_backward_input(g, k));
    kernels::conv3d_backward_params(x, g, gk, gb);
    benchmark::ClobberMemory();
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * 20 * hw * hw * c * c * 27));
}
BENCHMARK(BM_Conv3dBackward)->Args({38, 16})->Args({75, 16})->Unit(benchmark::kMillisecond);

void BM_MaxPool(benchmark::State& state) {
  const auto x = noise(Shape{20, 150, 200, 16}, 4);
  std::vector<std::size_t> arg;
  for (auto _ : state) benchmark::DoNotOptimize(kernels::maxpool_forward(x, kernels::Window3{1, 2, 2}, arg));
}
BENCHMARK(BM_MaxPool)->Unit(benchmark::kMillisecond);

void BM_HaarDwt(benchmark::State& state) {
  const auto x = noise(Shape{20, 300, 400, 1}, 5);
  for (auto _ : state) benchmark::DoNotOptimize(haar_dwt_downsample(x));
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(x.size() * sizeof(float)));
}
BENCHMARK(BM_HaarDwt)->Unit(benchmark::kMillisecond);

void BM_Preprocess(benchmark::State& state) {
  RawClip clip{noise(Shape{20, 160, 208, 1}, 6), 5.0, "bench"};
  for (auto& v : clip.frames.data()) v = 0.5f + 0.5f * v;
  PreprocConfig cfg;
  cfg.height = 75;
  cfg.width = 100;
  cfg.use_wavelet = state.range(0) != 0;
  for (auto _ : state) benchmark::DoNotOptimize(preprocess(clip, cfg));
}
BENCHMARK(BM_Preprocess)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace
