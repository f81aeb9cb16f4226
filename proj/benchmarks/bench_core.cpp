#include <benchmark/benchmark.h>

#include <random>

#include "mpreuse/calibration.hpp"
#include "mpreuse/data.hpp"
#include "mpreuse/density.hpp"
#include "mpreuse/ensemble.hpp"

using namespace mpreuse;

namespace {

// Three toy-style parties: softmax and MLP classifiers over KDE densities.
EnsembleModel toy_ensemble(std::size_t n) {
  const auto ds = generate_toy(0, n, 5);
  PartitionSpec spec;
  spec.parties = {{{0, 1}, 1.0, {}}, {{2, 3}, 1.0, {1.0, 0.5}}, {{3, 4}, 1.0, {0.5, 1.0}}};
  const auto shards = partition(ds, spec);
  std::vector<PartyModel> parties;
  for (std::size_t i = 0; i < shards.size(); ++i) {
    std::unique_ptr<Classifier> c;
    if (i == 0) {
      c = std::make_unique<SoftmaxRegression>(shards[i].label_space(), 2, i);
    } else {
      c = std::make_unique<MlpClassifier>(shards[i].label_space(), 2, std::vector<std::size_t>{32}, i);
    }
    parties.emplace_back(std::move(c), std::make_unique<KernelDensity>(kde_fit(shards[i].features(), 0.1)),
                         shards[i].size());
  }
  return build_ensemble(std::move(parties), 5);
}

std::vector<Vector> queries(std::size_t n) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> N(0.0, 4.0);
  std::vector<Vector> q;
  for (std::size_t i = 0; i < n; ++i) q.push_back((Vector(2) << N(rng), N(rng)).finished());
  return q;
}

}  // namespace

static void BM_KdeLogDensity(benchmark::State& state) {
  const auto ds = generate_toy(0, static_cast<std::size_t>(state.range(0)), 5);
  const auto kde = kde_fit(ds.features(), 0.1);
  const auto q = queries(256);
  std::size_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(kde.log_density(q[i++ % q.size()]));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_KdeLogDensity)->Range(64, 4096)->Complexity();

static void BM_EvaluateObjective(benchmark::State& state) {
  const auto ens = toy_ensemble(2000);
  const auto q = queries(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(evaluate_objective(ens, q));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_EvaluateObjective)->Arg(100)->Arg(1000);

static void BM_MpceGrad(benchmark::State& state) {
  const auto ens = toy_ensemble(2000);
  const auto q = queries(64);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(mpce_grad(ens, q[i % q.size()], static_cast<ClassLabel>(i % 5)));
    ++i;
  }
}
BENCHMARK(BM_MpceGrad);

static void BM_ClipAndNoise(benchmark::State& state) {
  ClipConfig cfg{1.0, 0.5, 3, false};
  Rng rng(7);
  const Vector g = Vector::Random(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(clip_and_noise(g, cfg, rng));
}
BENCHMARK(BM_ClipAndNoise)->Arg(1000);
BENCHMARK_MAIN();
