#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "popmf/error.hpp"
#include "popmf/meanfield.hpp"
#include "popmf/simulator.hpp"
#include "test_support.hpp"

using namespace popmf;

namespace {

MixedProfile random_profile(std::size_t n, std::size_t k, std::mt19937_64& gen) {
  std::exponential_distribution<double> e(1.0);
  MixedProfile y(n, k);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (auto& v : y.agent(i)) s += (v = e(gen));
    for (auto& v : y.agent(i)) v /= s;
  }
  return y;
}

MixedProfile clustered_profile(std::size_t n, std::size_t k_second) {
  MixedProfile y(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    y.agent(i)[0] = i < k_second ? 0.0 : 1.0;
    y.agent(i)[1] = i < k_second ? 1.0 : 0.0;
  }
  return y;
}

double telegraph_error(double h) {
  const auto sol = solve_cmfa(fixtures::telegraph(), std::vector<double>{1.0, 0.0}, std::vector<double>{0.0, 1.0}, h);
  return std::abs(sol.states.back().agent(0)[0] - (0.5 + 0.5 * std::exp(-2.0)));
}

}  // namespace

TEST(CmfaRhs, ConstantRatesFixedPoint) {
  const auto out = cmfa_rhs(fixtures::constant_policy(0.3), 1.0, std::vector<double>{0.5, 0.5});
  EXPECT_NEAR(out[0], 0.0, 1e-15);
  EXPECT_NEAR(out[1], 0.0, 1e-15);
}

TEST(CmfaRhs, UnitRatesLinearField) {
  const auto out = cmfa_rhs(fixtures::constant_policy(1.0), 1.0, std::vector<double>{0.8, 0.2});
  EXPECT_NEAR(out[0], -0.6, 1e-15);
  EXPECT_NEAR(out[1], 0.6, 1e-15);
}

TEST(CmfaRhs, LogitCoordination) {
  const auto p = logit_policy(coordination_utility(), 0.1);
  const auto out = cmfa_rhs(p, 1.0, std::vector<double>{0.8, 0.2});
  EXPECT_NEAR(out[0], 1.0 / (1.0 + std::exp(-4.0)) - 0.8, 1e-12);
  EXPECT_NEAR(out[0], 0.182014, 1e-6);
}

TEST(CmfaRhs, RejectsHeterogeneousPolicy) {
  SparseRows path{{{1, 1.0}}, {{0, 1.0}, {2, 1.0}}, {{1, 1.0}}};
  const auto m = sis_model(path, 1.0, 1.0);
  EXPECT_FALSE(m.policy().homogeneous_agents());
  EXPECT_THROW(cmfa_rhs(m.policy(), 1.0, std::vector<double>{0.5, 0.5}), ValidationError);
  EXPECT_THROW(cmfa_error_term(m, MixedProfile(3, 2, std::vector<double>(6, 0.5))), ValidationError);
}

TEST(NimfaRhs, SisDiseaseFree) {
  const auto m = sis_model(fixtures::clique_adjacency(4), 1.0, 1.0);
  MixedProfile y(4, 2);
  for (std::size_t i = 0; i < 4; ++i) y.agent(i)[0] = 1.0;
  std::vector<double> out(8, 1.0);
  nimfa_rhs(m, y.values(), out);
  for (double v : out) EXPECT_EQ(v, 0.0);
}

TEST(NimfaRhs, SisCliqueDirectEvaluation) {
  const auto m = sis_model(fixtures::clique_adjacency(3), 1.0, 1.0);
  MixedProfile y(3, 2, {0.0, 1.0, 1.0, 0.0, 1.0, 0.0});
  std::vector<double> out(6);
  nimfa_rhs(m, y.values(), out);
  EXPECT_NEAR(out[1], -1.0, 1e-14);  // agent 0, infected
  EXPECT_NEAR(out[3], 1.0, 1e-14);   // agent 1
  EXPECT_NEAR(out[5], 1.0, 1e-14);   // agent 2
}

TEST(NimfaRhs, HomogeneousReducesToCmfa) {
  const auto m = fixtures::logit_model(InteractionMatrix::complete(5));
  const std::vector<double> x{0.3, 0.7};
  MixedProfile y(5, 2);
  for (std::size_t i = 0; i < 5; ++i) std::copy(x.begin(), x.end(), y.agent(i).begin());
  std::vector<double> out(10);
  nimfa_rhs(m, y.values(), out);
  const auto phi = cmfa_rhs(m.policy(), 1.0, x);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_NEAR(out[2 * i], phi[0], 1e-15);
    EXPECT_NEAR(out[2 * i + 1], phi[1], 1e-15);
  }
}

TEST(Integrate, ZeroFieldIsConstant) {
  OdeRhs zero = [](double, std::span<const double>, std::span<double> dy) { std::fill(dy.begin(), dy.end(), 0.0); };
  MixedProfile init(2, 2, {0.25, 0.75, 1.0, 0.0});
  const auto sol = integrate(zero, init, 2.0, 0.1);
  for (const auto& s : sol.states) EXPECT_EQ(s.values(), init.values());
  EXPECT_EQ(sol.grid.back(), 2.0);
}

TEST(Integrate, TelegraphClosedForm) {
  EXPECT_LT(telegraph_error(1e-3), 1e-8);
}

TEST(Integrate, Rk4RichardsonRatio) {
  const double ratio = telegraph_error(0.1) / telegraph_error(0.05);
  EXPECT_GE(ratio, 12.0);
  EXPECT_LE(ratio, 20.0);
}

TEST(Integrate, HitsGridPointsAndShortensLastStep) {
  const auto sol = solve_cmfa(fixtures::telegraph(), std::vector<double>{1.0, 0.0}, std::vector<double>{0.0, 0.3, 1.0}, 0.25);
  ASSERT_EQ(sol.grid.size(), 3u);
  EXPECT_EQ(sol.grid[1], 0.3);
  // One full step of 0.25 and one shortened step of 0.05: the RK4 amplification
  // polynomial of the relaxation rate 2 evaluated at each step length.
  auto amp = [](double z) { return 1.0 - z + z * z / 2.0 - z * z * z / 6.0 + z * z * z * z / 24.0; };
  EXPECT_NEAR(sol.states[1].agent(0)[0], 0.5 + 0.5 * amp(0.5) * amp(0.1), 1e-14);
  EXPECT_NEAR(sol.states[1].agent(0)[0], 0.5 + 0.5 * std::exp(-0.6), 2e-4);
}

TEST(Integrate, NonFiniteDerivativeAborts) {
  OdeRhs bad = [](double t, std::span<const double>, std::span<double> dy) {
    std::fill(dy.begin(), dy.end(), 0.0);
    if (t > 0.45) dy[1] = std::numeric_limits<double>::quiet_NaN();
  };
  try {
    integrate(bad, MixedProfile(1, 2, {0.5, 0.5}), 1.0, 0.1);
    FAIL();
  } catch (const SimulationError& e) {
    EXPECT_NE(std::string(e.what()).find("t="), std::string::npos) << e.what();
  }
}

TEST(Integrate, RepairsDriftAndReportsIt) {
  OdeRhs leak = [](double, std::span<const double>, std::span<double> dy) {
    dy[0] = 1e-3;
    dy[1] = 0.0;
  };
  const auto sol = integrate(leak, MixedProfile(1, 2, {0.5, 0.5}), 1.0, 0.1);
  EXPECT_GT(sol.max_projection_correction, 1e-5);
  EXPECT_TRUE(sol.flagged());
  for (const auto& s : sol.states) EXPECT_NEAR(s.agent(0)[0] + s.agent(0)[1], 1.0, 1e-12);
}

TEST(SolveCmfa, RejectsUnequalClockRates) {
  PopulationModel m(StateSpace({"1", "2"}), {1.0, 2.0}, fixtures::constant_policy(0.5), InteractionMatrix::complete(2));
  EXPECT_THROW(solve_cmfa(m, std::vector<double>{0.5, 0.5}, std::vector<double>{0.0, 1.0}, 0.01), ValidationError);
}

TEST(NimfaAverage, Examples) {
  OdeSolution sol;
  sol.grid = {0.0};
  sol.states.push_back(MixedProfile(2, 2, {1.0, 0.0, 0.0, 1.0}));
  EXPECT_EQ(nimfa_average(sol)[0], (std::vector<double>{0.5, 0.5}));
  sol.states[0] = MixedProfile(3, 2, {0.2, 0.8, 0.2, 0.8, 0.2, 0.8});
  const auto avg = nimfa_average(sol)[0];
  EXPECT_NEAR(avg[0], 0.2, 1e-15);
  EXPECT_NEAR(avg[1], 0.8, 1e-15);
}

TEST(CmfaErrorTerm, VanishesForHomogeneousWOrEqualAgents) {
  std::mt19937_64 gen(43);
  const auto homog = fixtures::logit_model(InteractionMatrix::complete(8));
  for (double v : cmfa_error_term(homog, random_profile(8, 2, gen))) EXPECT_NEAR(v, 0.0, 1e-15);
  const auto ring = fixtures::logit_model(nearest_neighbor(20, 0.2));
  MixedProfile same(20, 2);
  for (std::size_t i = 0; i < 20; ++i) {
    same.agent(i)[0] = 0.35;
    same.agent(i)[1] = 0.65;
  }
  for (double v : cmfa_error_term(ring, same)) EXPECT_NEAR(v, 0.0, 1e-15);
}

TEST(CmfaErrorTerm, ClusteredRingMatchesResidual) {
  const auto m = fixtures::logit_model(nearest_neighbor(1000, 0.1));
  const auto y = clustered_profile(1000, 200);
  const auto err = cmfa_error_term(m, y);
  std::vector<double> phi_all(2000);
  nimfa_rhs(m, y.values(), phi_all);
  std::vector<double> mean_phi(2, 0.0);
  for (std::size_t i = 0; i < 1000; ++i) {
    mean_phi[0] += phi_all[2 * i] / 1000.0;
    mean_phi[1] += phi_all[2 * i + 1] / 1000.0;
  }
  const auto phi = cmfa_rhs(m.policy(), 1.0, y.average());
  EXPECT_GT(std::max(std::abs(err[0]), std::abs(err[1])), 1e-3);
  for (std::size_t a = 0; a < 2; ++a) EXPECT_NEAR(err[a], mean_phi[a] - phi[a], 1e-10);
}

TEST(Properties, Conservation) {
  std::mt19937_64 gen(47);
  const auto p = logit_policy(coordination_utility(), 0.1);
  for (int trial = 0; trial < 100; ++trial) {
    const auto x = random_profile(1, 2, gen).values();
    const auto phi = cmfa_rhs(p, 1.7, x);
    EXPECT_NEAR(phi[0] + phi[1], 0.0, 1e-13);
  }
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 15;
    const auto a = fixtures::random_weighted_adjacency(n, gen);
    for (const auto& m : {sis_model(a, 0.5, 1.0), fixtures::logit_model(row_normalized(a))}) {
      const auto y = random_profile(n, 2, gen);
      std::vector<double> out(2 * n);
      nimfa_rhs(m, y.values(), out);
      for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(out[2 * i] + out[2 * i + 1], 0.0, 1e-13);
    }
  }
}

TEST(Properties, DegeneracyOnHomogeneousW) {
  const std::size_t n = 200;
  const auto m = fixtures::logit_model(InteractionMatrix::complete(n));
  const std::vector<double> x0{0.8, 0.2};
  MixedProfile y0(n, 2);
  for (std::size_t i = 0; i < n; ++i) std::copy(x0.begin(), x0.end(), y0.agent(i).begin());
  const auto grid = std::vector<double>{0.0, 1.0, 2.0, 5.0};
  const auto cm = solve_cmfa(m, x0, grid, 1e-2);
  const auto ni = solve_nimfa(m, y0, grid, 1e-2);
  double worst = 0.0;
  for (std::size_t t = 0; t < grid.size(); ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t a = 0; a < 2; ++a) {
        worst = std::max(worst, std::abs(ni.states[t].agent(i)[a] - cm.states[t].agent(0)[a]));
      }
    }
  }
  EXPECT_LT(worst, 1e-8);
}

TEST(Properties, SimplexPreservationForBuiltins) {
  std::mt19937_64 gen(53);
  const auto a = fixtures::random_weighted_adjacency(30, gen);
  for (const auto& m : {sis_model(a, 0.3, 0.5), fixtures::logit_model(nearest_neighbor(100, 0.1)),
                        fixtures::logit_model(row_normalized(a), 0.05)}) {
    const auto sol = solve_nimfa(m, random_profile(m.n_agents(), 2, gen), std::vector<double>{0.0, 5.0}, 1e-2);
    EXPECT_LT(sol.max_projection_correction, 1e-6);
    EXPECT_FALSE(sol.flagged());
  }
}

TEST(Properties, ErrIdentityAlongNimfa) {
  const auto m = fixtures::logit_model(nearest_neighbor(60, 0.1));
  const double d = 5e-3;
  const auto grid = uniform_grid(1.0, d);
  const auto sol = solve_nimfa(m, clustered_profile(60, 12), grid, 1e-3);
  const auto avg = nimfa_average(sol);
  double worst = 0.0;
  for (std::size_t t = 2; t + 2 < grid.size(); ++t) {
    const auto phi = cmfa_rhs(m.policy(), 1.0, avg[t]);
    const auto err = cmfa_error_term(m, sol.states[t]);
    for (std::size_t a = 0; a < 2; ++a) {
      const double deriv = (-avg[t + 2][a] + 8 * avg[t + 1][a] - 8 * avg[t - 1][a] + avg[t - 2][a]) / (12 * d);
      worst = std::max(worst, std::abs(deriv - phi[a] - err[a]));
    }
  }
  EXPECT_LT(worst, 5e-10);
}

TEST(Export, CsvLayouts) {
  const auto sol = solve_cmfa(fixtures::telegraph(), std::vector<double>{1.0, 0.0}, std::vector<double>{0.0, 0.5}, 0.1);
  std::ostringstream cm;
  write_cmfa_csv(cm, sol, StateSpace({"1", "2"}));
  EXPECT_EQ(cm.str().substr(0, cm.str().find('\n')), "t,1,2");
  const auto m = fixtures::logit_model(InteractionMatrix::complete(2));
  const auto ni = solve_nimfa(m, clustered_profile(2, 1), uniform_grid(1.0, 0.25), 0.05);
  std::ostringstream nf;
  write_nimfa_csv(nf, ni, m.states(), 2);
  std::istringstream lines(nf.str());
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(line, "t,agent,1,2");
  std::size_t rows = 0;
  while (std::getline(lines, line)) ++rows;
  EXPECT_EQ(rows, 2u * 3u);  // grid points 0, 0.5, 1
}
