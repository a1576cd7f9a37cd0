// Serial vs OpenMP drivers of the explainer kernels on a synthetic problem.
// Run with --benchmark_filter=... ; thread count comes from OMP_NUM_THREADS.

#include <benchmark/benchmark.h>

#include <numeric>
#include <vector>

#include "explainbench/kernels.hpp"
#include "explainbench/models.hpp"
#include "explainbench/rng.hpp"

namespace eb = explainbench;

namespace {

struct Problem {
  eb::Matrix x;
  std::vector<int> y;
  eb::Model gbt;
  eb::Model logit;
  std::vector<eb::FeatureBlock> blocks;
  std::vector<int> owner;
};

const Problem& problem() {
  static const Problem p = [] {
    Problem p;
    const std::size_t n = 1000, m = 12;
    eb::CounterRng rng(7);
    p.x = eb::Matrix(n, m);
    p.y.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        p.x(i, j) = rng.normal();
        s += (j % 3 == 0 ? 1.0 : -0.5) * p.x(i, j);
      }
      p.y[i] = s + 0.3 * rng.normal() > 0 ? 1 : 0;
    }
    eb::TrainParams tp;
    tp.n_trees = 100;
    tp.max_depth = 3;
    p.gbt = eb::train_model(p.x, p.y, tp);
    tp.family = eb::ModelFamily::kLogistic;
    p.logit = eb::train_model(p.x, p.y, tp);
    for (std::size_t j = 0; j < m; ++j) {
      p.blocks.push_back({j, 1});
      p.owner.push_back(static_cast<int>(j));
    }
    return p;
  }();
  return p;
}

eb::Matrix background(std::size_t rows) {
  const Problem& p = problem();
  eb::Matrix b(rows, p.x.cols);
  std::copy_n(p.x.values.begin(), rows * p.x.cols, b.values.begin());
  return b;
}

eb::Exec exec_of(const benchmark::State& state) {
  return state.range(0) == 0 ? eb::Exec::kSerial : eb::Exec::kParallel;
}

void BM_AllCoalitionValues(benchmark::State& state) {
  const Problem& p = problem();
  const eb::Matrix bg = background(50);
  eb::CoalitionGame game{&p.gbt, p.blocks, p.x.row(0), &bg, eb::OutputScale::kProbability};
  for (auto _ : state) benchmark::DoNotOptimize(eb::all_coalition_values(game, exec_of(state)));
  state.SetLabel(state.range(0) == 0 ? "serial" : "parallel");
}

void BM_TreeShap(benchmark::State& state) {
  const Problem& p = problem();
  const eb::Matrix bg = background(100);
  const auto& ens = std::get<eb::TreeEnsembleModel>(p.gbt);
  for (auto _ : state) {
    for (std::size_t i = 0; i < 10; ++i) {
      benchmark::DoNotOptimize(
          eb::interventional_tree_shap(ens, p.owner, p.blocks.size(), p.x.row(i), bg, exec_of(state)));
    }
  }
  state.SetLabel(state.range(0) == 0 ? "serial" : "parallel");
}

void BM_PredictBatch(benchmark::State& state) {
  const Problem& p = problem();
  for (auto _ : state) benchmark::DoNotOptimize(eb::predict_batch(p.gbt, p.x, eb::OutputScale::kMargin, exec_of(state)));
  state.SetLabel(state.range(0) == 0 ? "serial" : "parallel");
}

}  // namespace

BENCHMARK(BM_AllCoalitionValues)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TreeShap)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PredictBatch)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
