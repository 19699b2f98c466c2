// Parallel kernels against the serial reference loops.
//   ./kernel_bench --benchmark_filter=Conv

#include <benchmark/benchmark.h>

#include "covert/kernels.hpp"
#include "covert/rng.hpp"

using namespace covert;
namespace k = covert::kernels;

namespace {

Tensor filled(Shape s, std::uint64_t seed) {
  Tensor t(s);
  Rng rng(seed);
  std::normal_distribution<double> n;
  for (auto& v : t.vec()) v = static_cast<Real>(n(rng));
  return t;
}

struct ConvCase {
  Tensor x, w, b, dy;
  k::ConvGeometry g;
};

// args: batch, channels, spatial size, stride
ConvCase conv_case(const benchmark::State& st) {
  const int n = st.range(0), c = st.range(1), hw = st.range(2), s = st.range(3);
  ConvCase cc;
  cc.g = k::ConvGeometry::square(3, s, 1);
  cc.x = filled({n, c, hw, hw}, 1);
  cc.w = filled({c, c, 3, 3}, 2);
  cc.b = filled({1, c, 1, 1}, 3);
  cc.dy = filled({n, c, cc.g.out_h(hw), cc.g.out_w(hw)}, 4);
  return cc;
}

template <bool Parallel>
void ConvForward(benchmark::State& st) {
  auto cc = conv_case(st);
  Tensor y;
  for (auto _ : st) {
    if constexpr (Parallel) k::conv2d_forward(cc.x, cc.w, cc.b, cc.g, y);
    else k::reference::conv2d_forward(cc.x, cc.w, cc.b, cc.g, y);
    benchmark::DoNotOptimize(y.data());
  }
  st.counters["GFLOP/s"] = benchmark::Counter(2.0 * cc.w.size() * cc.dy.size() / st.range(1),
                                              benchmark::Counter::kIsIterationInvariantRate,
                                              benchmark::Counter::kIs1000);
}

template <bool Parallel>
void ConvBackward(benchmark::State& st) {
  auto cc = conv_case(st);
  Tensor dx, dw(cc.w.shape()), db(cc.b.shape());
  for (auto _ : st) {
    if constexpr (Parallel) k::conv2d_backward(cc.x, cc.w, cc.dy, cc.g, &dx, dw, db);
    else k::reference::conv2d_backward(cc.x, cc.w, cc.dy, cc.g, &dx, dw, db);
    benchmark::DoNotOptimize(dx.data());
  }
}

template <bool Parallel>
void Upsample(benchmark::State& st) {
  const Tensor x = filled({static_cast<int>(st.range(0)), 16, 8, 8}, 5);
  Tensor y;
  for (auto _ : st) {
    if constexpr (Parallel) k::upsample_bilinear_forward(x, 64, 64, y);
    else k::reference::upsample_bilinear_forward(x, 64, 64, y);
    benchmark::DoNotOptimize(y.data());
  }
}

void conv_args(benchmark::internal::Benchmark* b) {
  b->Args({4, 16, 32, 1})->Args({4, 32, 16, 1})->Args({4, 32, 32, 2})->Args({32, 32, 8, 1});
  b->Unit(benchmark::kMicrosecond);
}

}  // namespace

BENCHMARK(ConvForward<true>)->Name("ConvForward/parallel")->Apply(conv_args);
BENCHMARK(ConvForward<false>)->Name("ConvForward/reference")->Apply(conv_args);
BENCHMARK(ConvBackward<true>)->Name("ConvBackward/parallel")->Apply(conv_args);
BENCHMARK(ConvBackward<false>)->Name("ConvBackward/reference")->Apply(conv_args);
BENCHMARK(Upsample<true>)->Name("Upsample/parallel")->Arg(4)->Arg(32)->Unit(benchmark::kMicrosecond);
BENCHMARK(Upsample<false>)->Name("Upsample/reference")->Arg(4)->Arg(32)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
