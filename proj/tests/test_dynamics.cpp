#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "popmf/dynamics.hpp"
#include "popmf/error.hpp"
#include "test_support.hpp"

using namespace popmf;

namespace {

std::vector<double> rates_from(const RatePolicy& p, std::size_t from, std::vector<double> z) {
  std::vector<double> out(p.n_states(), 0.0);
  p.row(0, from, z, out);
  return out;
}

std::vector<double> random_simplex(std::size_t k, std::mt19937_64& gen) {
  std::exponential_distribution<double> e(1.0);
  std::vector<double> z(k);
  double s = 0.0;
  for (auto& v : z) s += (v = e(gen));
  for (auto& v : z) v /= s;
  return z;
}

}  // namespace

TEST(StateSpace, LabelsAndLookup) {
  StateSpace s({"S", "I"});
  EXPECT_EQ(s.size(), 2u);
  EXPECT_EQ(*s.find("I"), 1u);
  EXPECT_FALSE(s.find("R").has_value());
  EXPECT_THROW(StateSpace({"A"}), ValidationError);
  EXPECT_THROW(StateSpace({"A", "A"}), ValidationError);
}

TEST(LocalEstimate, CompleteGraphCounts) {
  const auto w = InteractionMatrix::complete(4);
  PopulationState st(2, {0, 0, 1, 1});
  for (std::size_t i = 0; i < 4; ++i) {
    const auto z = local_estimate(w, st, i);
    EXPECT_DOUBLE_EQ(z[0], 0.5);
    EXPECT_DOUBLE_EQ(z[1], 0.5);
  }
}

TEST(LocalEstimate, PathMiddleAgent) {
  const std::vector<Edge> e{{0, 1}, {1, 2}};
  PopulationState st(2, {0, 1, 0});
  const auto z = local_estimate(from_adjacency(e, 3), st, 1);
  EXPECT_DOUBLE_EQ(z[0], 1.0);
  EXPECT_DOUBLE_EQ(z[1], 0.0);
}

TEST(LocalEstimate, RingNeighbors) {
  PopulationState st(2, {0, 0, 0, 1, 1, 1});
  const auto z = local_estimate(nearest_neighbor(6, 0.34), st, 1);
  EXPECT_DOUBLE_EQ(z[0], 1.0);
  EXPECT_DOUBLE_EQ(z[1], 0.0);
}

TEST(PopulationAverage, Examples) {
  std::vector<StateIndex> a(10, 0);
  a[8] = a[9] = 1;
  const auto avg = population_average(PopulationState(2, a));
  EXPECT_DOUBLE_EQ(avg[0], 0.8);
  EXPECT_DOUBLE_EQ(avg[1], 0.2);
  const auto same = population_average(PopulationState::uniform(7, 3, 2));
  EXPECT_EQ(same, (std::vector<double>{0.0, 0.0, 1.0}));
}

TEST(PopulationState, CountsFollowUpdates) {
  PopulationState st(3, {0, 1, 2, 2});
  st.set(0, 2);
  EXPECT_EQ(st.counts(), (std::vector<std::size_t>{0, 1, 3}));
  EXPECT_THROW(PopulationState(2, {0, 2}), ValidationError);
}

TEST(CoordinationUtility, Values) {
  const auto u = coordination_utility();
  std::vector<double> out(2);
  u.fn(std::vector<double>{1.0, 0.0}, out);
  EXPECT_EQ(out, (std::vector<double>{1.0, 0.0}));
  u.fn(std::vector<double>{0.0, 1.0}, out);
  EXPECT_EQ(out, (std::vector<double>{0.0, 2.0}));
  u.fn(std::vector<double>{0.5, 0.5}, out);
  EXPECT_EQ(out, (std::vector<double>{0.5, 1.0}));
}

TEST(LogitPolicy, EqualUtilitiesSplitEvenly) {
  const auto p = logit_policy(coordination_utility(), 0.1);
  EXPECT_TRUE(p.homogeneous_agents());
  EXPECT_NEAR(rates_from(p, 0, {2.0 / 3.0, 1.0 / 3.0})[1], 0.5, 1e-12);
  EXPECT_NEAR(rates_from(p, 1, {2.0 / 3.0, 1.0 / 3.0})[0], 0.5, 1e-12);
}

TEST(LogitPolicy, DirectEvaluation) {
  const auto p = logit_policy(coordination_utility(), 0.1);
  const double expected = 1.0 / (1.0 + std::exp(-4.0));
  EXPECT_NEAR(rates_from(p, 1, {0.8, 0.2})[0], expected, 1e-12);
  EXPECT_NEAR(expected, 0.982014, 1e-6);
  EXPECT_NEAR(p.rate(0, 0, 1, std::vector<double>{0.8, 0.2}), 1.0 - expected, 1e-12);
}

TEST(LogitPolicy, HighNoiseLimit) {
  const auto p = logit_policy(coordination_utility(), 1e3);
  EXPECT_NEAR(rates_from(p, 0, {0.1, 0.9})[1], 0.5, 1e-3);
}

TEST(LogitPolicy, OverflowSafe) {
  const auto p = logit_policy(coordination_utility(), 1e-4);
  const auto r = rates_from(p, 0, {0.0, 1.0});
  EXPECT_TRUE(std::isfinite(r[1]));
  EXPECT_NEAR(r[1], 1.0, 1e-12);
}

TEST(LogitPolicy, RejectsNonPositiveEta) {
  EXPECT_THROW(logit_policy(coordination_utility(), 0.0), ValidationError);
}

TEST(SisModel, CliqueRates) {
  const auto m = sis_model(fixtures::clique_adjacency(3), 1.0, 1.0);
  EXPECT_EQ(m.states().labels(), (std::vector<std::string>{"S", "I"}));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(m.clock_rate(i), 3.0);
  EXPECT_NEAR(m.policy().rate(0, 1, 0, std::vector<double>{0.0, 1.0}), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(m.policy().rate(0, 0, 1, std::vector<double>{0.0, 1.0}), 2.0 / 3.0, 1e-15);
  EXPECT_DOUBLE_EQ(m.policy().rate(0, 0, 1, std::vector<double>{1.0, 0.0}), 0.0);
}

TEST(SisModel, RejectsZeroDegree) {
  SparseRows a{{{1, 1.0}}, {{0, 1.0}}, {}};
  EXPECT_THROW(sis_model(a, 1.0, 1.0), ValidationError);
  EXPECT_THROW(sis_model(fixtures::clique_adjacency(3), 0.0, 1.0), ValidationError);
}

TEST(SisModel, RatesAndRowSumsFromConstruction) {
  std::mt19937_64 gen(23);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = std::uniform_int_distribution<std::size_t>(3, 12)(gen);
    const auto a = fixtures::random_weighted_adjacency(n, gen);
    const double b = 0.7, gamma = 1.3;
    const auto m = sis_model(a, b, gamma);
    for (std::size_t i = 0; i < n; ++i) {
      double deg = 0.0, row = 0.0;
      for (const auto& e : a[i]) deg += e.weight;
      for (const auto& e : m.interaction().row(i)) row += e.weight;
      EXPECT_EQ(m.clock_rate(i), b * deg + gamma);
      EXPECT_NEAR(row, 1.0, 1e-12);
    }
  }
}

TEST(ValidatePolicy, BuiltinsPass) {
  const auto logit = fixtures::logit_model(nearest_neighbor(20, 0.2));
  const auto r1 = validate_policy(logit, 200, 1);
  EXPECT_TRUE(r1.ok);
  EXPECT_LE(r1.worst_row_sum, 1.0 + 1e-12);
  EXPECT_TRUE(validate_policy(sis_model(fixtures::clique_adjacency(3), 1.0, 1.0), 200, 1).ok);
}

TEST(ValidatePolicy, AdversarialRowSumFails) {
  PopulationModel m(StateSpace({"a", "b", "c"}), {1.0}, fixtures::constant_policy(0.8, 3),
                    InteractionMatrix::complete(1));
  const auto r = validate_policy(m, 20, 1);
  EXPECT_FALSE(r.ok);
  EXPECT_NEAR(r.worst_row_sum, 1.6, 1e-12);
  ASSERT_FALSE(r.violations.empty());
  EXPECT_THROW(require_valid_policy(m), ValidationError);
}

TEST(ValidatePolicy, LipschitzBoundChecked) {
  RatePolicy liar(
      2, [](std::size_t, std::size_t from, std::span<const double> z, std::span<double> out) { out[1 - from] = z[0]; },
      0.1, true, "liar");
  PopulationModel m(StateSpace({"1", "2"}), {1.0, 1.0}, std::move(liar), InteractionMatrix::complete(2));
  EXPECT_FALSE(validate_policy(m, 100, 4).ok);
}

TEST(Properties, LocalEstimateOnSimplex) {
  std::mt19937_64 gen(29);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = std::uniform_int_distribution<std::size_t>(3, 40)(gen);
    const auto w = row_normalized(fixtures::random_weighted_adjacency(n, gen));
    std::vector<StateIndex> a(n);
    for (auto& s : a) s = static_cast<StateIndex>(gen() % 3);
    PopulationState st(3, a);
    for (std::size_t i = 0; i < n; ++i) {
      const auto z = local_estimate(w, st, i);
      double sum = 0.0;
      for (double v : z) {
        EXPECT_GE(v, 0.0);
        sum += v;
      }
      EXPECT_NEAR(sum, 1.0, 1e-12);
    }
  }
}

TEST(Properties, HomogeneousLocalEstimateIsAverage) {
  std::mt19937_64 gen(31);
  const auto w = InteractionMatrix::complete(17);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<StateIndex> a(17);
    for (auto& s : a) s = static_cast<StateIndex>(gen() % 2);
    PopulationState st(2, a);
    for (std::size_t i = 0; i < 17; ++i) EXPECT_EQ(local_estimate(w, st, i), population_average(st));
  }
}

TEST(Properties, LogitTargetProbabilitiesSumToOne) {
  std::mt19937_64 gen(37);
  const auto p = logit_policy(coordination_utility(), 0.1);
  for (int trial = 0; trial < 200; ++trial) {
    const auto z = random_simplex(2, gen);
    // Target-only rates: moving 0->1 plus moving 1->0 covers both targets once.
    EXPECT_NEAR(p.rate(0, 0, 1, z) + p.rate(0, 1, 0, z), 1.0, 1e-12);
    EXPECT_EQ(p.rate(0, 0, 1, z), rates_from(p, 0, z)[1]);
  }
}
