#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "popmf/model_spec.hpp"

namespace popmf {

enum class ExperimentKind { density, compare, sweep, dt_convergence, fig1, fig2 };

std::string_view to_string(ExperimentKind kind);
ExperimentKind parse_experiment_kind(std::string_view name);

/// Initial condition: clustered {fraction} puts the first floor(fraction N)
/// agents in the second state; random {p} draws the first state with
/// probability p independently per agent; file {path} reads `agent,state`.
struct InitSpec {
  std::string type = "clustered";
  double fraction = 0.2;
  double p = 0.8;
  std::filesystem::path path;
  /// Random only: draw a fresh assignment for every replicate instead of one
  /// per experiment case.
  bool resample = false;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::compare;
  ModelSpec model;
  double horizon = 10.0;
  double grid_step = 0.05;
  /// Empty selects 1e-3 * min(1, 1 / r_max).
  std::optional<double> ode_step;
  std::size_t replicates = 1;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  InitSpec init;
  /// compare / fig1 / fig2: nearest-neighbor densities, one case each.
  std::vector<double> densities;
  /// sweep: agent counts.
  std::vector<std::size_t> sizes;
  /// dt-convergence: step sizes.
  std::vector<double> xis;
  /// sweep: cmfa | nimfa | both.
  std::string reference = "cmfa";
  /// compare: integrate the NIMFA as well as the CMFA.
  bool nimfa = true;
  std::filesystem::path output = "out";
};

/// Built-in defaults for a kind (fig1 and fig2 carry the full figure setup).
ExperimentConfig default_config(ExperimentKind kind);

/// Parses a config. The `experiment` key selects the kind and its defaults;
/// other keys override them. A top-level `manifest` object is ignored, so
/// manifests written by the harness parse as configs. Unknown keys are errors.
ExperimentConfig parse_config(std::string_view json_text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

/// Canonical JSON echo, parseable by parse_config.
std::string config_json(const ExperimentConfig& config);

/// Checks value ranges (fractions in [0,1], T > 0, M >= 1, ...).
void validate_config(const ExperimentConfig& config);

}  // namespace popmf
