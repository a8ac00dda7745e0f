#include <benchmark/benchmark.h>

#include <numeric>
#include <vector>

#include "sdr/data.hpp"
#include "sdr/estimators.hpp"
#include "sdr/metrics.hpp"
#include "sdr/rng.hpp"
#include "sdr/theory.hpp"
#include "sdr/training.hpp"

using namespace sdr;

namespace {

struct Inputs {
  std::vector<std::uint8_t> o;
  std::vector<double> p_hat, e, e_hat;
};

Inputs random_inputs(std::size_t n) {
  Rng rng(7, 1);
  Inputs in;
  for (std::size_t k = 0; k < n; ++k) {
    in.o.push_back(rng.bernoulli(0.3) ? 1 : 0);
    in.p_hat.push_back(rng.uniform(0.05, 1.0));
    in.e.push_back(rng.uniform(0.0, 2.0));
    in.e_hat.push_back(rng.uniform(0.0, 2.0));
  }
  return in;
}

void BM_Estimator(benchmark::State& state, EstimatorKind kind) {
  const auto in = random_inputs(static_cast<std::size_t>(state.range(0)));
  const EstimatorInputs view{in.o, in.p_hat, in.e, in.e_hat};
  for (auto _ : state) benchmark::DoNotOptimize(estimate(kind, view).value);
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK_CAPTURE(BM_Estimator, ips, EstimatorKind::Ips)->Range(1 << 10, 1 << 20);
BENCHMARK_CAPTURE(BM_Estimator, dr, EstimatorKind::Dr)->Range(1 << 10, 1 << 20);
BENCHMARK_CAPTURE(BM_Estimator, sdr, EstimatorKind::Sdr)->Range(1 << 10, 1 << 20);

void BM_ExactMoments(benchmark::State& state) {
  TheoryWorldConfig wc;
  wc.size = static_cast<std::size_t>(state.range(0));
  const auto w = make_theory_world(wc);
  for (auto _ : state) benchmark::DoNotOptimize(exact_moments(w.inputs(), EstimatorKind::SdrConstrained).variance);
}
BENCHMARK(BM_ExactMoments)->DenseRange(8, 16, 4)->Unit(benchmark::kMillisecond);

void BM_MonteCarloReport(benchmark::State& state) {
  TheoryWorldConfig wc;
  const auto w = make_theory_world(wc);
  MonteCarloOptions mo;
  mo.replicates = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(monte_carlo_report(w.inputs(), EstimatorKind::Sdr, mo).mc_mean);
}
BENCHMARK(BM_MonteCarloReport)->Arg(10000)->Arg(100000)->Unit(benchmark::kMillisecond);

void BM_Auc(benchmark::State& state) {
  Rng rng(3, 3);
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<double> s(n);
  std::vector<int> y(n);
  for (std::size_t k = 0; k < n; ++k) {
    s[k] = rng.uniform();
    y[k] = rng.bernoulli(0.4) ? 1 : 0;
  }
  for (auto _ : state) benchmark::DoNotOptimize(auc(s, y));
}
BENCHMARK(BM_Auc)->Range(1 << 10, 1 << 16);

// One cycle-learning run on the 30 x 30 synthetic world.
void BM_CycleLearn(benchmark::State& state) {
  WorldConfig wc;
  wc.num_users = 30;
  wc.num_items = 30;
  const auto world = generate_synthetic_world(wc);
  TrainConfig c;
  c.max_cycles = static_cast<std::size_t>(state.range(0));
  c.patience = 0;
  c.batch_all = 900;
  c.batch_observed = 1000;
  const auto data = prepare_training_data(observe_world(world, sample_indicators(world, 1), 5, 1), c);
  const auto init = initial_models(data, c);
  for (auto _ : state) benchmark::DoNotOptimize(cycle_learn(data, c, init.models).history.size());
}
BENCHMARK(BM_CycleLearn)->Arg(5)->Arg(20)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
