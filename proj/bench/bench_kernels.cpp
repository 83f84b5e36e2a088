// Serial reference vs OpenMP kernels: buffer relabelling and ensemble training.

#include <benchmark/benchmark.h>

#include "mtpl/agent.hpp"
#include "mtpl/env.hpp"
#include "mtpl/replay.hpp"
#include "mtpl/reward_model.hpp"
#include "mtpl/teacher.hpp"

namespace {

using namespace mtpl;

replay::ReplayBuffer filled_buffer(std::size_t n) {
  auto env = envs::make_env(envs::EnvName::point_mass_easy);
  Rng rng(7);
  replay::ReplayBuffer buf(n);
  for (auto& t : agent::pretrain_collect(*env, n, rng)) buf.push(std::move(t));
  return buf;
}

reward::PreferenceDatasets labelled(const replay::ReplayBuffer& buf, std::size_t n) {
  Rng rng(11);
  reward::PreferenceDatasets d;
  for (std::size_t i = 0; i < n; ++i) {
    auto a = buf.sample_segment(50, rng);
    auto b = buf.sample_segment(50, rng);
    const double y = teacher::sim_label(a, b, 0.5);
    d.add({std::move(a), std::move(b), y, reward::Source::sim});
  }
  return d;
}

void BM_RelabelSerial(benchmark::State& state) {
  auto buf = filled_buffer(static_cast<std::size_t>(state.range(0)));
  Rng rng(1);
  reward::RewardEnsemble ens(4, 2, 3, {32, 32}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(replay::relabel_all_serial(buf, ens));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_RelabelOpenMP(benchmark::State& state) {
  auto buf = filled_buffer(static_cast<std::size_t>(state.range(0)));
  Rng rng(1);
  reward::RewardEnsemble ens(4, 2, 3, {32, 32}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(replay::relabel_all(buf, ens));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <bool Parallel>
void BM_TrainReward(benchmark::State& state) {
  const auto buf = filled_buffer(4000);
  const auto data = labelled(buf, static_cast<std::size_t>(state.range(0)));
  const reward::RewardTrainConfig cfg{5, 32, 3e-4};
  for (auto _ : state) {
    state.PauseTiming();
    Rng init(2);
    reward::RewardEnsemble ens(4, 2, 3, {32, 32}, init);
    Rng rng(3);
    state.ResumeTiming();
    auto stats = Parallel ? reward::train_reward(ens, data, {}, cfg, rng)
                          : reward::train_reward_serial(ens, data, {}, cfg, rng);
    benchmark::DoNotOptimize(stats.epoch_total.back());
  }
}

}  // namespace

BENCHMARK(BM_RelabelSerial)->Arg(10000)->Arg(100000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RelabelOpenMP)->Arg(10000)->Arg(100000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TrainReward<false>)->Name("BM_TrainRewardSerial")->Arg(100)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TrainReward<true>)->Name("BM_TrainRewardOpenMP")->Arg(100)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
