#include <benchmark/benchmark.h>

#include "attnmark/autograd.hpp"
#include "attnmark/model.hpp"
#include "attnmark/noise.hpp"
#include "attnmark/ops.hpp"

using namespace attnmark;

namespace {

Tensor<float> noise_tensor(Shape shape, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<float> t(std::move(shape));
  for (auto& v : t.values()) v = float(rng.uniform(-1, 1));
  return t;
}

// Args: frame side, input channels, output channels.
void BM_Conv11(benchmark::State& state) {
  const std::size_t side = state.range(0), cin = state.range(1), cout = state.range(2);
  const Var<float> x(noise_tensor(Shape{1, 8, side, side, cin}, 1));
  const Var<float> w(noise_tensor(Shape{11, 11, cin, cout}, 2), true);
  const Var<float> b(Tensor<float>(Shape{cout}, 0.0f), true);
  for (auto _ : state) {
    auto y = ops::conv2d_same(x, w, b);
    benchmark::DoNotOptimize(y.value().data());
  }
  state.SetItemsProcessed(state.iterations() * 8 * side * side * cin * cout * 121);
}
BENCHMARK(BM_Conv11)->Args({16, 3, 32})->Args({64, 3, 32})->Args({64, 32, 32})->Unit(benchmark::kMillisecond);

void BM_Conv11Backward(benchmark::State& state) {
  const std::size_t side = state.range(0);
  const Var<float> x(noise_tensor(Shape{1, 8, side, side, 32}, 1), true);
  Var<float> w(noise_tensor(Shape{11, 11, 32, 32}, 2), true);
  const Var<float> b(Tensor<float>(Shape{32}, 0.0f), true);
  for (auto _ : state) {
    auto y = ops::mean_all(ops::conv2d_same(x, w, b));
    backward(y);
    benchmark::DoNotOptimize(w.grad().data());
  }
}
BENCHMARK(BM_Conv11Backward)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_Dct3(benchmark::State& state) {
  const std::size_t side = state.range(0);
  const Tensor<float> video = noise_tensor(Shape{8, side, side, 3}, 3);
  for (auto _ : state) {
    auto c = noise::idct3(noise::dct3(video));
    benchmark::DoNotOptimize(c.data());
  }
}
BENCHMARK(BM_Dct3)->Arg(16)->Arg(64)->Unit(benchmark::kMicrosecond);

void BM_DctCompress(benchmark::State& state) {
  Var<float> video(noise_tensor(Shape{1, 8, 64, 64, 3}, 4), true);
  for (auto _ : state) {
    auto y = ops::mean_all(noise::dct_compress(video, 0.5));
    backward(y);
    benchmark::DoNotOptimize(video.grad().data());
  }
}
BENCHMARK(BM_DctCompress)->Unit(benchmark::kMillisecond);

void BM_Mjpeg(benchmark::State& state) {
  const Tensor<float> video = noise_tensor(Shape{8, 64, 64, 3}, 5);
  for (auto _ : state) {
    auto y = noise::mjpeg_roundtrip(video, 80);
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(BM_Mjpeg)->Unit(benchmark::kMillisecond);

void BM_EncodeDecode(benchmark::State& state) {
  WatermarkModel<float> model(32, Architecture::attention, 1);
  model.set_training(false);
  const VideoClip clip(noise_tensor(Shape{8, 64, 64, 3}, 6));
  const BitMessage msg(std::vector<std::uint8_t>(32, 1));
  for (auto _ : state) {
    auto logits = decode_clip(model, encode_clip(model, clip, msg));
    benchmark::DoNotOptimize(logits.data());
  }
}
BENCHMARK(BM_EncodeDecode)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
