#include <benchmark/benchmark.h>

#include <map>

#include "dhazard/basis.hpp"
#include "dhazard/engine.hpp"
#include "dhazard/model_core.hpp"
#include "dhazard/simulation.hpp"
#include "dhazard/survival_data.hpp"

using namespace dhazard;

namespace {

struct Setup {
  AugmentedDataset data;
  std::vector<DesignBlock> blocks;
};

const Setup& setup(int n) {
  static std::map<int, Setup> cache;
  auto it = cache.find(n);
  if (it == cache.end()) {
    sim::SimConfig sc;
    sc.n = n;
    Setup s;
    s.data = augment(sim::simulate_dataset(sc, 1), sc.horizon);
    s.blocks = build_design(sim::simulation_terms(sc), s.data);
    it = cache.emplace(n, std::move(s)).first;
  }
  return it->second;
}

void BM_SampleBatch(benchmark::State& state) {
  const Setup& s = setup(static_cast<int>(state.range(0)));
  Rng rng(3);
  for (auto _ : state) benchmark::DoNotOptimize(sample_batch(s.data, 20000, rng));
}

void BM_Accumulate(benchmark::State& state) {
  const Setup& s = setup(static_cast<int>(state.range(0)));
  Rng rng(5);
  const Frame frame(s.data, sample_batch(s.data, 20000, rng));
  const ModelState ms = initial_state(s.blocks, 100.0);
  const Eigen::VectorXd eta = predictor(s.blocks, ms, frame);
  const WorkingQuantities wq = score_weights(frame.y(), eta);
  for (auto _ : state) {
    for (std::size_t j = 0; j < s.blocks.size(); ++j) benchmark::DoNotOptimize(accumulate(s.blocks[j], ms.beta[j], frame, wq));
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * frame.rows() * s.blocks.size()));
}

void BM_BoostingIteration(benchmark::State& state) {
  const Setup& s = setup(static_cast<int>(state.range(0)));
  EngineConfig ec;
  ModelState ms = initial_state(s.blocks, ec.tau.initial);
  BoostingTally tally;
  int l = 0;
  for (auto _ : state) benchmark::DoNotOptimize(boosting_iteration(s.blocks, s.data, ms, ec, l++, tally));
}

}  // namespace

BENCHMARK(BM_SampleBatch)->Arg(5000)->Arg(50000)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Accumulate)->Arg(5000)->Arg(50000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BoostingIteration)->Arg(5000)->Arg(50000)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
