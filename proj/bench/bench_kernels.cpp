// Serial reference vs OpenMP kernels: the per-child deviance accumulation
// and the replication loop. Thread count comes from OMP_NUM_THREADS.

#include <benchmark/benchmark.h>

#include "falter/mixed_model.hpp"
#include "falter/simulation.hpp"

using namespace falter;

namespace {

const GrowthDataset& cohort() {
  static const auto data = generate_population(ScenarioConfig::preset(Design::Dense, 0.10), 0).dataset;
  return data;
}

void deviance(benchmark::State& state, const ModelSpec& spec, KernelMode mode) {
  const DevianceEvaluator eval(cohort(), spec);
  const auto q = static_cast<Eigen::Index>(eval.random_effects());
  const Eigen::VectorXd theta = pack_lower(0.5 * Eigen::MatrixXd::Identity(q, q));
  for (auto _ : state) benchmark::DoNotOptimize(eval(theta, mode));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(eval.children()));
}

void BM_DevianceRS(benchmark::State& state) {
  deviance(state, ModelSpec::random_slopes(), static_cast<KernelMode>(state.range(0)));
}

void BM_DevianceBrokenStick(benchmark::State& state) {
  deviance(state, ModelSpec::broken_stick(KnotVector({0.0, 0.25, 0.5, 0.75}, 1.0)),
           static_cast<KernelMode>(state.range(0)));
}

void BM_Gradient(benchmark::State& state) {
  const DevianceEvaluator eval(cohort(), ModelSpec::broken_stick(KnotVector({0.0, 0.25, 0.5, 0.75}, 1.0)));
  const Eigen::VectorXd theta = pack_lower(0.5 * Eigen::MatrixXd::Identity(5, 5));
  Eigen::VectorXd grad;
  for (auto _ : state) benchmark::DoNotOptimize(eval.value_and_gradient(theta, grad));
}

void BM_Fit(benchmark::State& state) {
  FitOptions opt;
  opt.kernel = static_cast<KernelMode>(state.range(0));
  const auto spec = ModelSpec::broken_stick(KnotVector({0.0, 0.25, 0.5, 0.75}, 1.0));
  for (auto _ : state) benchmark::DoNotOptimize(fit_mixed_model(cohort(), spec, opt).deviance);
}

void BM_Scenario(benchmark::State& state) {
  auto cfg = ScenarioConfig::preset(Design::Dense, 0.10);
  cfg.n_children = 500;
  cfg.n_replications = 4;
  const auto exec = state.range(0) == 0 ? Execution::Serial : Execution::Parallel;
  for (auto _ : state) benchmark::DoNotOptimize(run_scenario(cfg, exec).size());
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(cfg.n_replications));
}

}  // namespace

// argument 0 = serial reference, 1 = OpenMP
BENCHMARK(BM_DevianceRS)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_DevianceBrokenStick)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Gradient)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Fit)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Scenario)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
