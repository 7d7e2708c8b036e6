// Serial reference kernels against their OpenMP counterparts.
//   agm_bench --benchmark_filter=gemm
// The second argument of each benchmark is the OpenMP thread count.
#include <benchmark/benchmark.h>

#include <vector>

#include "agm/kernels.hpp"
#include "agm/rng.hpp"

namespace k = agm::kernels;

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  agm::Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

template <auto Gemm>
void bm_gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  k::set_num_threads(static_cast<int>(state.range(1)));
  const k::GemmShape s{n, n, n, false, false};
  const auto a = random_values(n * n, 1), b = random_values(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    Gemm(s, a, b, c, false);
    benchmark::DoNotOptimize(c.data());
  }
  state.counters["MAC/s"] = benchmark::Counter(static_cast<double>(n * n * n), benchmark::Counter::kIsIterationInvariantRate);
}

// First stage of the toy feature extractor on one second of 8 kHz audio,
// and a grouped positional convolution over 200 frames.
k::Conv1dShape conv_shape(int which) {
  if (which == 0) return {8000, 1, 32, 20, 5, 0, 0, 1};
  return {200, 32, 32, 8, 1, 4, 3, 4};
}

template <auto Conv>
void bm_conv1d(benchmark::State& state) {
  const k::Conv1dShape s = conv_shape(static_cast<int>(state.range(0)));
  k::set_num_threads(static_cast<int>(state.range(1)));
  const auto x = random_values(s.in_len * s.in_channels, 3);
  const auto w = random_values(s.out_channels * s.in_per_group() * s.kernel, 4);
  const auto bias = random_values(s.out_channels, 5);
  std::vector<double> y(s.out_len() * s.out_channels);
  for (auto _ : state) {
    Conv(s, x, w, bias, y);
    benchmark::DoNotOptimize(y.data());
  }
  state.counters["MAC/s"] = benchmark::Counter(
      static_cast<double>(s.out_len() * s.out_channels * s.in_per_group() * s.kernel),
      benchmark::Counter::kIsIterationInvariantRate);
}

void gemm_args(benchmark::internal::Benchmark* b) {
  for (int n : {32, 128, 256})
    for (int t : {1, 2, 4}) b->Args({n, t});
}

void conv_args(benchmark::internal::Benchmark* b) {
  for (int which : {0, 1})
    for (int t : {1, 2, 4}) b->Args({which, t});
}

}  // namespace

BENCHMARK(bm_gemm<k::serial::gemm>)->Name("gemm/serial")->Apply(gemm_args)->UseRealTime();
BENCHMARK(bm_gemm<k::omp::gemm>)->Name("gemm/omp")->Apply(gemm_args)->UseRealTime();
BENCHMARK(bm_conv1d<k::serial::conv1d_forward>)->Name("conv1d/serial")->Apply(conv_args)->UseRealTime();
BENCHMARK(bm_conv1d<k::omp::conv1d_forward>)->Name("conv1d/omp")->Apply(conv_args)->UseRealTime();

BENCHMARK_MAIN();
