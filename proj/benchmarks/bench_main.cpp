#include <benchmark/benchmark.h>

#include <vector>

#include "popmf/dynamics.hpp"
#include "popmf/interaction.hpp"
#include "popmf/meanfield.hpp"
#include "popmf/model_spec.hpp"
#include "popmf/oracle.hpp"
#include "popmf/simulator.hpp"

namespace {

popmf::PopulationModel ring_logit(std::size_t n, double density) {
  return popmf::PopulationModel(popmf::StateSpace({"1", "2"}), std::vector<double>(n, 1.0),
                                popmf::logit_policy(popmf::coordination_utility(), 0.1),
                                popmf::nearest_neighbor(n, density));
}

popmf::PopulationState clustered(std::size_t n) {
  std::vector<popmf::StateIndex> a(n, 0);
  for (std::size_t i = 0; i < n / 5; ++i) a[i] = 1;
  return popmf::PopulationState(2, a);
}

void BM_SimulateCtRing(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto model = ring_logit(n, 0.1);
  const auto init = clustered(n);
  std::uint64_t seed = 1;
  std::size_t events = 0;
  for (auto _ : state) {
    popmf::SimCounters counters;
    const auto traj = popmf::simulate_ct(model, init, 1.0, seed++, &counters);
    events += traj.events.size();
    benchmark::DoNotOptimize(traj.events.data());
  }
  state.counters["events/s"] = benchmark::Counter(static_cast<double>(events), benchmark::Counter::kIsRate);
}
BENCHMARK(BM_SimulateCtRing)->Arg(1000)->Arg(4000)->Unit(benchmark::kMillisecond);

void BM_NimfaRhs(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto model = ring_logit(n, 0.1);
  std::vector<double> y(2 * n), out(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    y[2 * i] = i < n / 5 ? 0.0 : 1.0;
    y[2 * i + 1] = 1.0 - y[2 * i];
  }
  for (auto _ : state) {
    popmf::nimfa_rhs(model, y, out);
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(BM_NimfaRhs)->Arg(1000)->Arg(4000);

void BM_SpectralDensityRing(benchmark::State& state) {
  const auto w = popmf::nearest_neighbor(static_cast<std::size_t>(state.range(0)), 0.1);
  for (auto _ : state) benchmark::DoNotOptimize(popmf::spectral_density(w).lambda);
}
BENCHMARK(BM_SpectralDensityRing)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);

void BM_BuildGenerator(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto model = popmf::sis_model(popmf::build_adjacency({"nearest_neighbor", n, 0.2, {}}), 0.1, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(popmf::build_generator(model).size());
}
BENCHMARK(BM_BuildGenerator)->Arg(8)->Arg(10)->Arg(12)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
