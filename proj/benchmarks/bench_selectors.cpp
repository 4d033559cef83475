// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include <numeric>
#include <vector>

#include "mlbatch/correlation.hpp"
#include "mlbatch/sampler.hpp"
#include "mlbatch/selectors.hpp"

using namespace mlbatch;

namespace {

Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform();
  return m;
}

// One post-warm-up epoch of the uncertainty selector: scoring plus every
// batch draw and history update.
void BM_OursEpoch(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto q = static_cast<std::size_t>(state.range(1));
  SelectorConfig sc;
  sc.batch_size = 32;
  sc.warmup = 1;
  sc.total_epochs = 1 << 30;
  OursSelector sel(n, q, sc);
  Rng rng(1);
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);
  for (std::size_t k = 0; k < sc.window; ++k) sel.on_batch_forward(all, uniform_matrix(n, q, rng));
  const Matrix probs = uniform_matrix(sc.batch_size, q, rng);
  int epoch = 2;
  for (auto _ : state) {
    sel.on_epoch_start(epoch++, rng);
    for (std::size_t b = 0; b < sel.batches_per_epoch(); ++b) sel.on_batch_forward(sel.next_batch(rng), probs);
  }
  state.SetComplexityN(static_cast<benchmark::IterationCount>(n * q * (sc.window + q)));
}
BENCHMARK(BM_OursEpoch)->Args({1000, 20})->Args({2000, 20})->Args({4000, 20})->Args({2000, 40})->Args({2000, 80})
    ->Unit(benchmark::kMillisecond);

void BM_CorrelationMatrix(benchmark::State& state) {
  Rng rng(2);
  const Matrix u = uniform_matrix(state.range(0), state.range(1), rng);
  for (auto _ : state) benchmark::DoNotOptimize(correlation_matrix(u, 10));
}
BENCHMARK(BM_CorrelationMatrix)->Args({2000, 20})->Args({2000, 80})->Unit(benchmark::kMillisecond);

void BM_DrawBatch(benchmark::State& state) {
  const auto n = state.range(0);
  Rng rng(3);
  Vector w(n);
  for (auto& x : w) x = rng.uniform();
  const Vector p = selection_probabilities(w, 100.0);
  WeightedSampler sampler({p.data(), static_cast<std::size_t>(n)});
  for (auto _ : state) benchmark::DoNotOptimize(sampler.draw(128, rng));
}
BENCHMARK(BM_DrawBatch)->Arg(1000)->Arg(10000)->Arg(100000);

}  // namespace
BENCHMARK_MAIN();
