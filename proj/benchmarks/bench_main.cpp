#include <benchmark/benchmark.h>

#include "resolvent/kernels.hpp"
#include "resolvent/special.hpp"

namespace {

using namespace resolvent;

void BM_ml_series(benchmark::State& state) {
  for (auto _ : state) {
    benchmark::DoNotOptimize(ml(0.5, 1.0, cx(-2.0, 0.5)));
  }
}
BENCHMARK(BM_ml_series);

void BM_ml_rescue(benchmark::State& state) {
  for (auto _ : state) {
    benchmark::DoNotOptimize(ml(1.0, 1.0, -20.0));
  }
}
BENCHMARK(BM_ml_rescue);

void BM_ml_matrix(benchmark::State& state) {
  Mat A = Mat::Zero(8, 8);
  for (int i = 0; i < 8; ++i) A(i, i) = -0.5 * (i + 1);
  for (int i = 0; i + 1 < 8; ++i) A(i, i + 1) = 0.1;
  for (auto _ : state) {
    benchmark::DoNotOptimize(ml_matrix(0.5, 1.0, A));
  }
}
BENCHMARK(BM_ml_matrix);

void BM_conv1_singular(benchmark::State& state) {
  Grid g{1.0, static_cast<int>(state.range(0))};
  Kernel tab = Kernel::tabulated(g, Kernel::exponential(1.0).eval_nodes(g));
  for (auto _ : state) {
    benchmark::DoNotOptimize(conv1(Kernel::power(0.5), tab, g));
  }
}
BENCHMARK(BM_conv1_singular)->Arg(128)->Arg(256);

}  // namespace

BENCHMARK_MAIN();
