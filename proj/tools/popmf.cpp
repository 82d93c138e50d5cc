#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "popmf/config.hpp"
#include "popmf/error.hpp"
#include "popmf/harness.hpp"

namespace {

struct Overrides {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> replicates;
  std::optional<unsigned> threads;
};

popmf::ExperimentConfig resolve(popmf::ExperimentKind kind, const Overrides& o) {
  popmf::ExperimentConfig config;
  if (o.config.empty()) {
    if (kind != popmf::ExperimentKind::fig1 && kind != popmf::ExperimentKind::fig2) {
      throw popmf::ValidationError(std::string(popmf::to_string(kind)) + " needs --config");
    }
    config = popmf::default_config(kind);
  } else {
    config = popmf::load_config(o.config);
    if (config.kind != kind) {
      throw popmf::ValidationError("config describes a '" + std::string(popmf::to_string(config.kind)) +
                                   "' experiment, not '" + std::string(popmf::to_string(kind)) + "'");
    }
  }
  if (!o.out.empty()) config.output = std::filesystem::absolute(o.out).lexically_normal();
  if (o.seed) config.seed = *o.seed;
  if (o.replicates) config.replicates = *o.replicates;
  if (o.threads) config.threads = *o.threads;
  popmf::validate_config(config);
  return config;
}

void report(const popmf::RunArtifacts& art) {
  std::cout << "wrote " << art.output_dir.string() << "\n";
  std::cout << "  " << art.manifest.filename().string() << "\n";
  for (const auto& p : art.csv_files) std::cout << "  " << p.filename().string() << "\n";
  for (const auto& p : art.svg_files) std::cout << "  " << p.filename().string() << "\n";
  for (const auto& c : art.cases) {
    std::cout << c.name << ": median sup-deviation cmfa " << c.median_dev_cmfa << ", nimfa " << c.median_dev_nimfa
              << "\n";
  }
  for (const auto& f : art.fits) std::cout << "slope (" << f.reference << "): " << f.fit.slope << "\n";
  for (const auto& p : art.dt) std::cout << "xi " << p.xi << ": gap " << p.gap << " (se " << p.gap_se << ")\n";
}

const char* describe(popmf::ExperimentKind kind) {
  switch (kind) {
    case popmf::ExperimentKind::density: return "spectral density and theta of the configured matrices";
    case popmf::ExperimentKind::compare: return "Monte Carlo ensemble against CMFA and NIMFA";
    case popmf::ExperimentKind::sweep: return "deviation scaling over a list of population sizes";
    case popmf::ExperimentKind::dt_convergence: return "discrete-time chain converging to the continuous-time one";
    case popmf::ExperimentKind::fig1: return "clustered start on nearest-neighbor rings";
    case popmf::ExperimentKind::fig2: return "random starts on nearest-neighbor rings";
  }
  return "";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stochastic population games on graphs versus their mean-field approximations"};
  app.require_subcommand(1);
  Overrides o;
  for (auto kind : {popmf::ExperimentKind::density, popmf::ExperimentKind::compare, popmf::ExperimentKind::sweep,
                    popmf::ExperimentKind::dt_convergence, popmf::ExperimentKind::fig1,
                    popmf::ExperimentKind::fig2}) {
    auto* sub = app.add_subcommand(std::string(popmf::to_string(kind)), describe(kind));
    sub->add_option("--config", o.config, "JSON experiment config (or a manifest.txt to replay)");
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--seed", o.seed, "base seed");
    sub->add_option("--replicates", o.replicates, "replicate count M")->check(CLI::PositiveNumber);
    sub->add_option("--threads", o.threads, "worker threads")->check(CLI::PositiveNumber);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const auto kind = popmf::parse_experiment_kind(app.get_subcommands().front()->get_name());
    report(popmf::run_experiment(resolve(kind, o)));
    return 0;
  } catch (const popmf::ValidationError& e) {
    std::cerr << "popmf: invalid input: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "popmf: error: " << e.what() << "\n";
    return 1;
  }
}
