// Serial reference kernel vs the tiled OpenMP kernel on a synthetic set.
#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "lingsim/simkernel.hpp"

namespace {

lingsim::VectorSet synthetic(std::size_t n, std::size_t layers, std::size_t dim) {
  std::mt19937_64 rng(42);
  std::normal_distribution<float> g;
  std::vector<float> v(n * layers * dim);
  for (auto& x : v) x = g(rng);
  return lingsim::make_vector_set("bench", 1, std::vector<int>{1, 2, 3, 4, 5}, n, dim, v);
}

const lingsim::VectorSet& fixture() {
  static const auto vs = synthetic(512, 5, 512);
  return vs;
}

void BM_Reference(benchmark::State& state) {
  lingsim::SimConfig cfg;
  cfg.aggregation = static_cast<lingsim::Aggregation>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(lingsim::reference::pairwise_similarity(fixture(), nullptr, cfg));
  state.SetItemsProcessed(state.iterations() * 512 * 513 / 2);
}

void BM_Tiled(benchmark::State& state) {
  lingsim::SimConfig cfg;
  cfg.aggregation = static_cast<lingsim::Aggregation>(state.range(0));
  cfg.threads = static_cast<int>(state.range(1));
  cfg.tile = static_cast<std::size_t>(state.range(2));
  for (auto _ : state) benchmark::DoNotOptimize(lingsim::pairwise_similarity(fixture(), cfg));
  state.SetItemsProcessed(state.iterations() * 512 * 513 / 2);
}

}  // namespace

BENCHMARK(BM_Reference)->Arg(0)->Arg(1)->UseRealTime()->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Tiled)
    ->ArgsProduct({{0, 1}, {1, 2, 4}, {64, 256}})
    ->ArgNames({"agg", "threads", "tile"})
    ->UseRealTime()
    ->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
