#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "popmf/config.hpp"
#include "popmf/dynamics.hpp"
#include "popmf/interaction.hpp"
#include "popmf/oracle.hpp"
#include "popmf/simulator.hpp"

namespace popmf {

/// First floor(fraction * n) agents (from index 0) in the second state, the
/// rest in the first.
PopulationState init_clustered(std::size_t n, double fraction, std::size_t n_states = 2);

/// Each agent independently in the first state with probability p, otherwise
/// in the second.
PopulationState init_random(std::size_t n, double p_first, std::uint64_t seed, std::size_t n_states = 2);

/// Reads an `agent,state` CSV (state given by label) covering agents 0..n-1.
PopulationState load_initial_state(const std::filesystem::path& path, const StateSpace& states);

/// Base seed of experiment case c: replicate k of that case then uses
/// replicate_seed(case_seed(seed, c), k).
std::uint64_t case_seed(std::uint64_t seed, std::size_t c);

/// Linear-interpolation quantile (q in [0, 1]) of the finite values.
double quantile(std::vector<double> values, double q);
inline double median(std::vector<double> values) { return quantile(std::move(values), 0.5); }

/// Number of sign changes of the finite differences, ignoring differences of
/// magnitude <= tol: the count of interior local extrema of a sampled curve.
std::size_t interior_extrema(std::span<const double> series, double tol = 1e-12);

/// Least-squares fit of log(y) = intercept + slope * log(x).
struct LogLogFit {
  double slope = 0.0;
  double intercept = 0.0;
};
LogLogFit fit_loglog(std::span<const double> x, std::span<const double> y);

/// One compare case (one interaction matrix).
struct CaseResult {
  std::string name;
  std::size_t n_agents = 0;
  std::uint64_t seed = 0;
  DensityReport density;
  EnsembleStats ensemble;
  /// Reference curves on the ensemble grid (empty when not computed).
  std::vector<std::vector<double>> cmfa;
  std::vector<std::vector<double>> nimfa;
  std::vector<DeviationRecord> deviations;
  double median_dev_cmfa = 0.0;
  double p95_dev_cmfa = 0.0;
  double median_dev_nimfa = 0.0;
  double p95_dev_nimfa = 0.0;
  /// Interior extrema of the NIMFA average share of the second state.
  std::size_t nimfa_interior_extrema = 0;
  double max_projection_correction = 0.0;
};

struct SweepPoint {
  std::size_t n_agents = 0;
  std::string reference;
  std::size_t m = 0;
  double median = 0.0;
  double p95 = 0.0;
  double mean = 0.0;
  double theta = 0.0;
};

struct SweepFit {
  std::string reference;
  LogLogFit fit;
};

struct DtPoint {
  double xi = 0.0;
  std::size_t steps = 0;
  std::vector<double> mean;
  std::vector<double> standard_error;
  /// Exact step-xi marginal when the state space is small enough.
  std::vector<double> exact;
  double gap = 0.0;
  double gap_se = 0.0;
  double gap_exact = 0.0;
};

struct DensityRow {
  std::string name;
  std::size_t n_agents = 0;
  DensityReport report;
  /// max_{k>=1} |mu_k| for nearest-neighbor rings, NaN otherwise.
  double circulant_max = 0.0;
};

struct RunArtifacts {
  std::filesystem::path output_dir;
  std::filesystem::path manifest;
  std::vector<std::filesystem::path> csv_files;
  std::vector<std::filesystem::path> svg_files;
  std::vector<CaseResult> cases;
  std::vector<SweepPoint> sweep;
  std::vector<SweepFit> fits;
  std::vector<DtPoint> dt;
  /// Terminal CT means used as the dt-convergence reference; exact when the
  /// state space allowed it.
  std::vector<double> ct_reference;
  std::vector<double> ct_reference_se;
  bool ct_reference_exact = false;
  std::vector<DensityRow> densities;
};

/// Runs the configured experiment, writing into config.output. On failure
/// every file written so far is removed and the error is rethrown.
RunArtifacts run_experiment(const ExperimentConfig& config);

/// compare, fig1 and fig2.
RunArtifacts run_compare(const ExperimentConfig& config);
RunArtifacts run_sweep(const ExperimentConfig& config);
RunArtifacts run_dt_convergence(const ExperimentConfig& config);
RunArtifacts run_density(const ExperimentConfig& config);

}  // namespace popmf
