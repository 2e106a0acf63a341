// Serial reference loops against their OpenMP versions for the batch kernels.
// Arg 0 = serial, 1 = parallel.

#include <benchmark/benchmark.h>

#include "clrm/geostat/clustering.hpp"
#include "clrm/geostat/realizations.hpp"
#include "clrm/policy/policy.hpp"
#include "clrm/ppo/rollout.hpp"

using namespace clrm;

namespace {

Exec exec_of(const benchmark::State& state) { return state.range(0) ? Exec::parallel : Exec::serial; }

const geostat::AssetSpec& desk() {
  static const geostat::AssetSpec a = geostat::desk_asset('A');
  return a;
}

const geostat::RealizationSet& desk_set() {
  static const geostat::RealizationSet s = geostat::generate_realizations(desk(), 16, 11);
  return s;
}

void BM_GenerateRealizations(benchmark::State& state) {
  geostat::GenerationOptions o;
  o.exec = exec_of(state);
  for (auto _ : state) benchmark::DoNotOptimize(geostat::generate_realizations(desk(), 32, 3, o));
  state.SetItemsProcessed(state.iterations() * 32);
}

void BM_SequentialSimulation3D(benchmark::State& state) {
  geostat::GenerationOptions o;
  o.exec = exec_of(state);
  o.method = geostat::FieldMethod::sequential;
  const geostat::AssetSpec spec = geostat::table2_asset('A');
  for (auto _ : state) benchmark::DoNotOptimize(geostat::generate_realizations(spec, 4, 5, o));
  state.SetItemsProcessed(state.iterations() * 4);
}

void BM_FlowFeatures(benchmark::State& state) {
  for (auto _ : state) {
    benchmark::DoNotOptimize(geostat::flow_response_features(desk(), desk_set(), 20, 2000.0, exec_of(state)));
  }
  state.SetItemsProcessed(state.iterations() * desk_set().count());
}

void BM_RolloutBatch(benchmark::State& state) {
  ppo::Scenario sc;
  sc.assets = {desk()};
  sc.sets = {desk_set()};
  const policy::Policy net(policy::PolicyConfig::single_asset(sc.layout().width(), desk().well_count(), 1));
  std::vector<ppo::EpisodeTask> tasks;
  for (int i = 0; i < 8; ++i) tasks.push_back({0, i, 0.5, false, false, 100u + i});
  ppo::RolloutOptions o;
  o.exec = exec_of(state);
  for (auto _ : state) benchmark::DoNotOptimize(ppo::collect_rollouts(net, sc, tasks, o));
  state.SetItemsProcessed(state.iterations() * tasks.size());
}

}  // namespace

BENCHMARK(BM_GenerateRealizations)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_SequentialSimulation3D)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_FlowFeatures)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_RolloutBatch)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
