#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "popmf/config.hpp"
#include "popmf/error.hpp"
#include "popmf/harness.hpp"
#include "popmf/model_spec.hpp"

using namespace popmf;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("popmf_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string first_line(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  return line;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

const char* kSmallLogit = R"({
  "experiment": "compare",
  "model": {"policy": {"type": "logit", "eta": 0.1}, "matrix": {"type": "nearest_neighbor", "n": 40, "density": 0.2}},
  "horizon": 2, "grid_step": 0.1, "ode_step": 0.01, "replicates": 6, "seed": 9,
  "init": {"type": "clustered", "fraction": 0.25}
})";

int run_cli(const std::string& args) {
  const std::string cmd = std::string(POPMF_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(InitClustered, Examples) {
  const auto s = init_clustered(10, 0.2);
  EXPECT_EQ(s.state(0), 1);
  EXPECT_EQ(s.state(1), 1);
  for (std::size_t i = 2; i < 10; ++i) EXPECT_EQ(s.state(i), 0);
  EXPECT_EQ(init_clustered(7, 0.0).counts()[1], 0u);
  EXPECT_EQ(init_clustered(7, 1.0).counts()[1], 7u);
  EXPECT_THROW(init_clustered(7, 1.5), ValidationError);
}

TEST(InitRandom, ExamplesAndConcentration) {
  EXPECT_EQ(init_random(50, 1.0, 3).counts()[0], 50u);
  const auto s = init_random(1000, 0.8, 12345);
  EXPECT_NEAR(static_cast<double>(s.counts()[0]), 800.0, 4.0 * std::sqrt(1000 * 0.16));
  EXPECT_EQ(init_random(1000, 0.8, 12345), s);
  EXPECT_NE(init_random(1000, 0.8, 12346), s);
}

TEST(LoadInitialState, ParsesLabelsAndRejectsGaps) {
  const auto dir = scratch("init");
  const StateSpace states({"S", "I"});
  write_file(dir / "ok.csv", "agent,state\n1,I\n0,S\n2,S\n");
  const auto s = load_initial_state(dir / "ok.csv", states);
  EXPECT_EQ(s.assignment(), (std::vector<StateIndex>{0, 1, 0}));
  write_file(dir / "gap.csv", "agent,state\n0,S\n2,I\n");
  EXPECT_THROW(load_initial_state(dir / "gap.csv", states), ValidationError);
  write_file(dir / "label.csv", "agent,state\n0,R\n");
  EXPECT_THROW(load_initial_state(dir / "label.csv", states), ValidationError);
}

TEST(Statistics, QuantileAndMedian) {
  EXPECT_DOUBLE_EQ(median({3.0, 1.0, 2.0}), 2.0);
  EXPECT_DOUBLE_EQ(median({1.0, 2.0, 3.0, 4.0}), 2.5);
  EXPECT_DOUBLE_EQ(quantile({0.0, 10.0}, 0.95), 9.5);
  EXPECT_DOUBLE_EQ(quantile({1.0, NAN, 5.0}, 1.0), 5.0);
  EXPECT_TRUE(std::isnan(quantile({}, 0.5)));
}

TEST(Statistics, InteriorExtrema) {
  const std::vector<double> mono{0.0, 0.1, 0.1, 0.3};
  const std::vector<double> hump{0.0, 0.2, 0.3, 0.25, 0.1};
  const std::vector<double> wiggle{0.0, 1.0, 0.0, 1.0};
  EXPECT_EQ(interior_extrema(mono), 0u);
  EXPECT_EQ(interior_extrema(hump), 1u);
  EXPECT_EQ(interior_extrema(wiggle), 2u);
}

TEST(Statistics, LogLogFitRecoversPowerLaw) {
  const std::vector<double> x{125, 500, 2000};
  std::vector<double> y;
  for (double v : x) y.push_back(3.0 * std::pow(v, -0.5));
  const auto fit = fit_loglog(x, y);
  EXPECT_NEAR(fit.slope, -0.5, 1e-12);
  EXPECT_NEAR(std::exp(fit.intercept), 3.0, 1e-10);
}

TEST(Seeds, CaseSeedsAreDistinct) {
  EXPECT_NE(case_seed(1, 0), case_seed(1, 1));
  EXPECT_NE(case_seed(1, 0), case_seed(2, 0));
  EXPECT_EQ(case_seed(5, 3), case_seed(5, 3));
}

TEST(Config, ParsesAndEchoesRoundTrip) {
  const auto c = parse_config(kSmallLogit, "/tmp");
  EXPECT_EQ(c.kind, ExperimentKind::compare);
  EXPECT_EQ(c.model.matrix.n, 40u);
  EXPECT_EQ(c.replicates, 6u);
  const auto again = parse_config(config_json(c), "/tmp");
  EXPECT_EQ(config_json(again), config_json(c));
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  std::string text = kSmallLogit;
  text.insert(text.rfind('}'), ", \"colour\": 1");
  EXPECT_THROW(parse_config(text), ValidationError);
  EXPECT_THROW(parse_config(R"({"experiment": "compare"})"), ValidationError);
  EXPECT_THROW(parse_config(R"({"experiment": "bogus"})"), ValidationError);
  std::string neg = kSmallLogit;
  neg.replace(neg.find("\"horizon\": 2"), 12, "\"horizon\": -1");
  EXPECT_THROW(parse_config(neg), ValidationError);
  std::string frac = kSmallLogit;
  frac.replace(frac.find("0.25"), 4, "1.25");
  EXPECT_THROW(parse_config(frac), ValidationError);
  std::string typed = kSmallLogit;
  typed.replace(typed.find("\"replicates\": 6"), 15, "\"replicates\": \"six\"");
  EXPECT_THROW(parse_config(typed), ValidationError);
  EXPECT_THROW(parse_config("{not json"), ValidationError);
}

TEST(Config, ManifestSectionIsIgnored) {
  std::string text = kSmallLogit;
  text.insert(text.rfind('}'), ", \"manifest\": {\"anything\": [1, 2]}");
  EXPECT_NO_THROW(parse_config(text));
}

TEST(Config, FigureDefaults) {
  const auto f1 = default_config(ExperimentKind::fig1);
  EXPECT_EQ(f1.model.matrix.n, 1000u);
  EXPECT_EQ(f1.init.type, "clustered");
  EXPECT_DOUBLE_EQ(f1.horizon, 10.0);
  const auto f2 = default_config(ExperimentKind::fig2);
  EXPECT_EQ(f2.densities, (std::vector<double>{0.2, 0.5, 0.8}));
  EXPECT_DOUBLE_EQ(f2.init.p, 0.8);
}

TEST(ModelSpec, BuildsEveryMatrixSource) {
  const auto dir = scratch("spec");
  write_file(dir / "g.txt", "0 1\n1 2\n2 3\n3 0\n");
  write_file(dir / "f.txt", "n 4\n0 1\n");
  const auto edge = build_model(parse_model_spec(
      R"({"policy": {"type": "sis", "b": 0.5, "gamma": 1}, "matrix": {"type": "edge_list", "path": "g.txt"}})", dir));
  EXPECT_EQ(edge.n_agents(), 4u);
  EXPECT_DOUBLE_EQ(edge.clock_rate(0), 2.0);
  const auto lf = build_model(parse_model_spec(
      R"({"policy": {"type": "logit", "eta": 0.1}, "matrix": {"type": "link_failures", "path": "f.txt"}})", dir));
  EXPECT_DOUBLE_EQ(lf.interaction().weight(0, 2), 0.5);
  const auto ring = build_model(parse_model_spec(
      R"({"policy": {"type": "logit", "eta": 0.1}, "clock_rate": [1, 2, 3, 4, 5], "matrix": {"type": "ring", "n": 5}})"));
  EXPECT_DOUBLE_EQ(ring.clock_rate(4), 5.0);
  EXPECT_DOUBLE_EQ(ring.interaction().weight(0, 4), 0.5);
  EXPECT_THROW(parse_model_spec(R"({"policy": {"type": "sis", "b": 1, "gamma": 1}, "clock_rate": 2,
                                    "matrix": {"type": "complete", "n": 3}})"),
               ValidationError);
}

TEST(RunCompare, HomogeneousSingleReplicateReferencesCoincide) {
  auto c = parse_config(R"({
    "experiment": "compare",
    "model": {"policy": {"type": "logit", "eta": 0.1}, "matrix": {"type": "complete", "n": 50}},
    "horizon": 3, "grid_step": 0.1, "ode_step": 0.01, "replicates": 1, "seed": 1,
    "init": {"type": "clustered", "fraction": 0.3}
  })");
  c.output = scratch("homog") / "out";
  const auto art = run_compare(c);
  ASSERT_EQ(art.cases.size(), 1u);
  const auto& k = art.cases[0];
  double worst = 0.0;
  for (std::size_t t = 0; t < k.cmfa.size(); ++t) {
    for (std::size_t a = 0; a < 2; ++a) worst = std::max(worst, std::abs(k.cmfa[t][a] - k.nimfa[t][a]));
  }
  EXPECT_LT(worst, 1e-8);
}

TEST(RunCompare, WritesDocumentedFiles) {
  auto c = parse_config(kSmallLogit);
  c.output = scratch("files") / "out";
  const auto art = run_compare(c);
  for (const char* f : {"manifest.txt", "timeseries.csv", "deviations.csv", "density.csv", "summary.csv"}) {
    EXPECT_TRUE(fs::exists(c.output / f)) << f;
  }
  EXPECT_EQ(first_line(c.output / "timeseries.csv"),
            "case,t,mean_1,mean_2,se_1,se_2,nimfa_1,nimfa_2,cmfa_1,cmfa_2");
  EXPECT_EQ(first_line(c.output / "deviations.csv"), "case,replicate,seed,sup_dev_cmfa,sup_dev_nimfa");
  ASSERT_EQ(art.svg_files.size(), 1u);
  EXPECT_NE(slurp(art.svg_files[0]).find("</svg>"), std::string::npos);
  EXPECT_EQ(art.cases[0].deviations.size(), 6u);
  for (const auto& d : art.cases[0].deviations) {
    EXPECT_GT(d.sup_dev_cmfa, 0.0);
    EXPECT_GT(d.sup_dev_nimfa, 0.0);
  }
}

TEST(RunCompare, ReplayedManifestIsByteIdentical) {
  auto c = parse_config(kSmallLogit);
  c.threads = 2;
  const auto root = scratch("replay");
  c.output = root / "a";
  const auto first = run_experiment(c);
  auto replay = load_config(first.manifest);
  replay.output = root / "b";
  const auto second = run_experiment(replay);
  ASSERT_EQ(first.csv_files.size(), second.csv_files.size());
  for (std::size_t i = 0; i < first.csv_files.size(); ++i) {
    EXPECT_EQ(slurp(first.csv_files[i]), slurp(second.csv_files[i])) << first.csv_files[i];
  }
}

TEST(RunCompare, FailureRemovesPartialOutputs) {
  auto c = parse_config(R"({
    "experiment": "compare",
    "model": {"policy": {"type": "logit", "eta": 0.1}, "matrix": {"type": "complete", "n": 10}},
    "horizon": 1, "grid_step": 0.1, "replicates": 2,
    "init": {"type": "file", "path": "/nonexistent/init.csv"}
  })");
  c.output = scratch("fail") / "out";
  EXPECT_THROW(run_experiment(c), ValidationError);
  EXPECT_FALSE(fs::exists(c.output));
}

TEST(RunCompare, ResampledInitsGetOwnReferences) {
  auto c = parse_config(R"({
    "experiment": "compare",
    "model": {"policy": {"type": "logit", "eta": 0.1}, "matrix": {"type": "nearest_neighbor", "n": 40, "density": 0.2}},
    "horizon": 1, "grid_step": 0.1, "ode_step": 0.01, "replicates": 4, "seed": 2,
    "init": {"type": "random", "p": 0.8, "resample": true}, "nimfa": true
  })");
  c.output = scratch("resample") / "out";
  const auto art = run_compare(c);
  const auto& k = art.cases[0];
  // Each replicate's reference starts from its own Y(0), so the deviation at t=0 is zero.
  for (const auto& d : k.deviations) {
    EXPECT_EQ(d.cmfa.front(), 0.0);
    EXPECT_EQ(d.nimfa.front(), 0.0);
  }
  EXPECT_NE(k.ensemble.replicates[0][0], k.ensemble.replicates[1][0]);
}

TEST(RunSweep, SlopeAndCsv) {
  auto c = parse_config(R"({
    "experiment": "sweep",
    "model": {"policy": {"type": "logit", "eta": 0.1}, "matrix": {"type": "complete", "n": 10}},
    "sizes": [20, 40, 80], "horizon": 1, "grid_step": 0.1, "ode_step": 0.01, "replicates": 8, "seed": 4,
    "reference": "both"
  })");
  c.output = scratch("sweep") / "out";
  const auto art = run_sweep(c);
  EXPECT_EQ(art.sweep.size(), 6u);
  EXPECT_EQ(art.fits.size(), 2u);
  EXPECT_EQ(first_line(c.output / "sweep.csv"), "n,reference,m,median,p95,mean,theta");
  EXPECT_LT(art.fits[0].fit.slope, 0.0);
}

TEST(RunDtConvergence, DiseaseFreeGapIsZero) {
  auto c = parse_config(R"({
    "experiment": "dt-convergence",
    "model": {"policy": {"type": "sis", "b": 0.1, "gamma": 1}, "matrix": {"type": "ring", "n": 6}},
    "horizon": 1, "grid_step": 1, "replicates": 50, "seed": 3,
    "init": {"type": "clustered", "fraction": 0}, "xis": [0.1, 0.05]
  })");
  c.output = scratch("dtzero") / "out";
  const auto art = run_dt_convergence(c);
  ASSERT_EQ(art.dt.size(), 2u);
  for (const auto& p : art.dt) {
    EXPECT_NEAR(p.gap, 0.0, 1e-12);
    EXPECT_NEAR(p.gap_exact, 0.0, 1e-12);
  }
  EXPECT_TRUE(art.ct_reference_exact);
}

TEST(RunDtConvergence, CtReferenceStableAcrossRuns) {
  auto c = parse_config(R"({
    "experiment": "dt-convergence",
    "model": {"policy": {"type": "sis", "b": 0.1, "gamma": 1}, "matrix": {"type": "ring", "n": 6}},
    "horizon": 1, "grid_step": 1, "replicates": 300, "seed": 3,
    "init": {"type": "clustered", "fraction": 1}, "xis": [0.1]
  })");
  const auto root = scratch("dtstable");
  c.output = root / "a";
  run_dt_convergence(c);
  c.xis = {0.1, 0.05, 0.025};
  c.output = root / "b";
  run_dt_convergence(c);
  EXPECT_EQ(slurp(root / "a" / "ct_reference.csv"), slurp(root / "b" / "ct_reference.csv"));
}

TEST(RunDtConvergence, RejectsStepAboveTotalRate) {
  auto c = parse_config(R"({
    "experiment": "dt-convergence",
    "model": {"policy": {"type": "logit", "eta": 0.1}, "matrix": {"type": "complete", "n": 10}},
    "horizon": 1, "grid_step": 1, "replicates": 5, "xis": [0.5]
  })");
  c.output = scratch("dtbad") / "out";
  EXPECT_THROW(run_dt_convergence(c), ValidationError);
}

TEST(RunDensity, Examples) {
  const auto root = scratch("density");
  auto c = parse_config(R"({"experiment": "density", "matrix": {"type": "complete", "n": 100}})");
  c.output = root / "complete";
  auto art = run_density(c);
  ASSERT_EQ(art.densities.size(), 1u);
  EXPECT_DOUBLE_EQ(art.densities[0].report.theta, 0.1);
  EXPECT_LT(art.densities[0].report.lambda, 1e-10);
  EXPECT_DOUBLE_EQ(art.densities[0].report.max_col_sum, 1.0);
  EXPECT_TRUE(fs::exists(c.output / "matrix_complete.csv"));

  c = parse_config(R"({"experiment": "density", "matrix": {"type": "nearest_neighbor", "n": 1000, "density": 0.5}})");
  c.output = root / "ring";
  art = run_density(c);
  EXPECT_NEAR(art.densities[0].report.lambda, 0.6346, 1e-4);
  EXPECT_NEAR(art.densities[0].report.lambda, art.densities[0].circulant_max, 1e-6);

  write_file(root / "star.txt", "0 1\n0 2\n0 3\n0 4\n");
  c = parse_config(R"({"experiment": "density", "matrix": {"type": "edge_list", "path": "star.txt"}})", root);
  c.output = root / "star";
  art = run_density(c);
  EXPECT_DOUBLE_EQ(art.densities[0].report.max_col_sum, 4.0);
  EXPECT_EQ(first_line(c.output / "density.csv"),
            "case,n,theta,lambda,lambda_residual,lambda_iterations,max_col_sum,circulant_max");
}

TEST(Cli, ExitCodes) {
  const auto root = scratch("cli");
  write_file(root / "ok.json", R"({"experiment": "density", "matrix": {"type": "complete", "n": 5}, "output": "out"})");
  write_file(root / "bad.json", R"({"experiment": "density", "matrix": {"type": "complete", "n": 5}, "oops": 1})");
  EXPECT_EQ(run_cli("density --config " + (root / "ok.json").string()), 0);
  EXPECT_TRUE(fs::exists(root / "out" / "density.csv"));
  EXPECT_EQ(run_cli("density --config " + (root / "bad.json").string()), 2);
  EXPECT_EQ(run_cli("compare --config " + (root / "ok.json").string()), 2);
  EXPECT_EQ(run_cli("density"), 2);
  EXPECT_EQ(run_cli("nonsense"), 2);
  EXPECT_EQ(run_cli("density --config " + (root / "ok.json").string() + " --out /proc/popmf_forbidden"), 2);
}
