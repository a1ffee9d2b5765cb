#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "microgrid/agent.hpp"
#include "microgrid/market.hpp"
#include "microgrid/runner.hpp"

namespace mg = microgrid;

static void BM_PolicyForward(benchmark::State& state) {
  const int batch = static_cast<int>(state.range(0));
  const mg::nn::DenseNet net = mg::make_policy_net(mg::policy_input_dim(10), 64, 6.0, 1.0, 1);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(mg::policy_input_dim(10), batch);
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(x));
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_PolicyForward)->Arg(1)->Arg(20)->Arg(256);

static void BM_PolicyBackward(benchmark::State& state) {
  const int batch = static_cast<int>(state.range(0));
  const mg::nn::DenseNet net = mg::make_policy_net(mg::policy_input_dim(10), 64, 6.0, 1.0, 1);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(mg::policy_input_dim(10), batch);
  const Eigen::MatrixXd g = Eigen::MatrixXd::Random(4, batch);
  for (auto _ : state) {
    mg::nn::ForwardCache cache;
    net.forward(x, &cache);
    benchmark::DoNotOptimize(net.backward(cache, g));
  }
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_PolicyBackward)->Arg(256);

static void BM_ClearMarket(benchmark::State& state) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 3.0);
  std::vector<double> trades(static_cast<std::size_t>(state.range(0)));
  for (auto& t : trades) t = n(rng);
  const mg::PriceSlot prices{0.03, 0.065, 0.1};
  for (auto _ : state) benchmark::DoNotOptimize(mg::clear_market(trades, prices));
}
BENCHMARK(BM_ClearMarket)->Arg(20)->Arg(200);

// One day of the desk community under the greedy policy.
static void BM_RolloutDay(benchmark::State& state) {
  mg::ExperimentConfig cfg = mg::desk_profile();
  mg::SyntheticConfig syn;
  syn.n_households = cfg.sim.n_households;
  syn.days = 3;
  const mg::Scenario s = mg::generate_synthetic(syn, std::uint64_t{7});
  mg::TrainedModels models{mg::make_policy_net(mg::policy_input_dim(10), 64, 6.0, 1.0, 1),
                           mg::make_value_net(mg::policy_input_dim(10), 64, 2), std::nullopt};
  mg::RolloutOptions opts;
  opts.first_day = 1;
  opts.end_day = 2;
  opts.mode = mg::ActionMode::kSample;
  opts.record = true;
  for (auto _ : state) benchmark::DoNotOptimize(mg::rollout(s, cfg, mg::variant_of(mg::Algorithm::kMppo), &models, opts));
  state.SetItemsProcessed(state.iterations() * 24);
}
BENCHMARK(BM_RolloutDay)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
