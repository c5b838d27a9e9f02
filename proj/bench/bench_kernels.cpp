// Serial reference loops vs OpenMP loops for the three parallel kernels.

#include <benchmark/benchmark.h>

#include "hmme/diversity.hpp"
#include "hmme/ensemble.hpp"
#include "synthetic.hpp"

namespace {

using namespace hmme;

const LabeledDataset& corpus() {
  static const LabeledDataset data = [] {
    const auto pair = testing::moderately_separated_pair();
    return testing::sample_dataset(pair.positive, pair.negative, 400, 400, 200, 1);
  }();
  return data;
}

EnsembleConfig bench_config() {
  EnsembleConfig config;
  config.n_positive = 16;
  config.n_negative = 16;
  config.subset_factor = 0.1;
  config.train.max_iters = 10;
  config.master_seed = 2;
  return config;
}

const EnsembleModel& trained() {
  static const EnsembleModel model = train_ensemble(corpus(), bench_config());
  return model;
}

Execution mode(const benchmark::State& state) {
  return state.range(0) == 0 ? Execution::Serial : Execution::Parallel;
}

void BM_TrainEnsemble(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(train_ensemble(corpus(), bench_config(), mode(state)));
}

void BM_ScoreCorpus(benchmark::State& state) {
  const auto& model = trained();
  for (auto _ : state) benchmark::DoNotOptimize(score_corpus(model, corpus().sequences, mode(state)));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(corpus().size()));
}

void BM_SimilarityMatrix(benchmark::State& state) {
  const auto& model = trained();
  for (auto _ : state) benchmark::DoNotOptimize(similarity_matrix(model, mode(state)));
}

// Argument 0 is the serial loop, 1 the OpenMP loop.
BENCHMARK(BM_TrainEnsemble)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ScoreCorpus)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SimilarityMatrix)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
