#include "rdiv/data.hpp"
#include "rdiv/divergences.hpp"
#include "rdiv/models.hpp"
#include "rdiv/testing.hpp"

#include <benchmark/benchmark.h>

using namespace rdiv;

namespace {

DatasetPair blob_pair(std::size_t n) {
  return DatasetPair(gen_blob(n, 1, Side::P), gen_blob(n, 2, Side::Q));
}

void bench_kde_risk(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto pair = blob_pair(n);
  const auto merged = canonical_union(pair, 3);
  const auto h = fit(ModelSpec::kde(), merged, 3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(empirical_risk(h, pair.p_hat));
  }
  state.SetComplexityN(static_cast<std::int64_t>(n));
}
BENCHMARK(bench_kde_risk)->Arg(100)->Arg(400)->Arg(1000)->Complexity();

void bench_rdiv_kde(benchmark::State& state) {
  const auto pair = blob_pair(static_cast<std::size_t>(state.range(0)));
  std::uint64_t seed = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(r_div(pair, ModelSpec::kde(), seed++).value);
  }
}
BENCHMARK(bench_rdiv_kde)->Arg(100)->Arg(400);

void bench_permute_pair(benchmark::State& state) {
  const auto pair = blob_pair(static_cast<std::size_t>(state.range(0)));
  std::uint64_t seed = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(permute_pair(pair, seed++).p_hat.values().sum());
  }
}
BENCHMARK(bench_permute_pair)->Arg(400)->Arg(2000);

void bench_mmd(benchmark::State& state) {
  const auto pair = blob_pair(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(mmd_o(pair, 1.0));
  }
}
BENCHMARK(bench_mmd)->Arg(50)->Arg(200);

void bench_mlp_fit_epoch(benchmark::State& state) {
  const auto data = gen_gauss_classes(1024, 4, 8, 4.0, 5);
  MlpConfig cfg;
  cfg.hidden = {64, 64};
  cfg.epochs = 1;
  const auto spec = ModelSpec::mlp_classifier(cfg);
  std::uint64_t seed = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(fit(spec, data, seed++));
  }
}
BENCHMARK(bench_mlp_fit_epoch);

void bench_permutation_test(benchmark::State& state) {
  const auto pair = blob_pair(100);
  const auto stat = make_statistic(EstimatorKind::RDiv, ModelSpec::kde());
  for (auto _ : state) {
    benchmark::DoNotOptimize(permutation_test(pair, stat, 20, 0.05, 7).reject);
  }
}
BENCHMARK(bench_permutation_test);

}  // namespace

BENCHMARK_MAIN();
