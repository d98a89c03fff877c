// Reference vs tiled/OpenMP convolution kernels, plus one full training step.
//
//   ./bench_kernels --benchmark_filter=Conv

#include <benchmark/benchmark.h>

#include <vector>

#include "sinv/nn/kernels.h"
#include "sinv/nn/ops.h"
#include "sinv/nn/optim.h"
#include "sinv/nn/tcn.h"

using namespace sinv::nn;

namespace {

kernels::ConvGeometry geometry(const benchmark::State& st) {
  kernels::ConvGeometry g;
  g.batch = int(st.range(0));
  g.in_channels = g.out_channels = int(st.range(1));
  g.frames = 250;
  g.kernel = int(st.range(2));
  g.dilation = int(st.range(3));
  return g;
}

std::vector<float> filled(std::size_t n, std::uint64_t seed) {
  SplitMix64 rng(seed);
  std::vector<float> v(n);
  for (auto& x : v) x = float(rng.uniform(-1, 1));
  return v;
}

void set_flops(benchmark::State& st, const kernels::ConvGeometry& g) {
  st.counters["GFLOP/s"] = benchmark::Counter(
      2.0 * double(g.output_size()) * g.in_channels * g.kernel,
      benchmark::Counter::kIsIterationInvariantRate, benchmark::Counter::kIs1000);
}

template <bool kParallel>
void BM_ConvForward(benchmark::State& st) {
  auto g = geometry(st);
  auto x = filled(g.input_size(), 1), w = filled(g.weight_size(), 2),
       b = filled(g.out_channels, 3);
  std::vector<float> y(g.output_size());
  for (auto _ : st) {
    if constexpr (kParallel)
      kernels::parallel::conv1d_forward<float>(g, x, w, b, y);
    else
      kernels::reference::conv1d_forward<float>(g, x, w, b, y);
    benchmark::DoNotOptimize(y.data());
  }
  set_flops(st, g);
}

template <bool kParallel>
void BM_ConvBackwardInput(benchmark::State& st) {
  auto g = geometry(st);
  auto dy = filled(g.output_size(), 1), w = filled(g.weight_size(), 2);
  std::vector<float> dx(g.input_size());
  for (auto _ : st) {
    if constexpr (kParallel)
      kernels::parallel::conv1d_backward_input<float>(g, dy, w, dx);
    else
      kernels::reference::conv1d_backward_input<float>(g, dy, w, dx);
    benchmark::DoNotOptimize(dx.data());
  }
  set_flops(st, g);
}

template <bool kParallel>
void BM_ConvBackwardParams(benchmark::State& st) {
  auto g = geometry(st);
  auto x = filled(g.input_size(), 1), dy = filled(g.output_size(), 2);
  std::vector<float> dw(g.weight_size()), db(g.out_channels);
  for (auto _ : st) {
    if constexpr (kParallel)
      kernels::parallel::conv1d_backward_params<float>(g, x, dy, dw, db);
    else
      kernels::reference::conv1d_backward_params<float>(g, x, dy, dw, db);
    benchmark::DoNotOptimize(dw.data());
  }
  set_flops(st, g);
}

// batch, channels, kernel, dilation
void conv_args(benchmark::internal::Benchmark* b) {
  b->Args({4, 128, 1, 1})->Args({4, 256, 3, 4})->Unit(benchmark::kMillisecond);
}

BENCHMARK(BM_ConvForward<false>)->Name("ConvForward/reference")->Apply(conv_args);
BENCHMARK(BM_ConvForward<true>)->Name("ConvForward/parallel")->Apply(conv_args);
BENCHMARK(BM_ConvBackwardInput<false>)->Name("ConvBackwardInput/reference")->Apply(conv_args);
BENCHMARK(BM_ConvBackwardInput<true>)->Name("ConvBackwardInput/parallel")->Apply(conv_args);
BENCHMARK(BM_ConvBackwardParams<false>)->Name("ConvBackwardParams/reference")->Apply(conv_args);
BENCHMARK(BM_ConvBackwardParams<true>)->Name("ConvBackwardParams/parallel")->Apply(conv_args);

void BM_TcnTrainStep(benchmark::State& st) {
  TcnModel<float> model(TcnConfig{});
  Adam<float> opt(model.parameters());
  const std::size_t B = st.range(0);
  auto xv = filled(B * 128 * 250, 4), tv = filled(B * 9 * 200, 5);
  auto x = Tensor<float>::from({B, 128, 250}, xv);
  auto target = Tensor<float>::from({B, 9, 200}, tv);
  std::vector<std::uint8_t> mask(B * 200, 1);
  for (auto _ : st) {
    opt.zero_grad();
    auto loss = mse_loss(model.forward(x, Mode::kTrain), target, mask);
    backward(loss);
    opt.step(1e-3);
  }
}
BENCHMARK(BM_TcnTrainStep)->Arg(16)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
