#include "popmf/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>

#include "json_support.hpp"
#include "popmf/csv.hpp"
#include "popmf/meanfield.hpp"
#include "popmf/model_spec.hpp"
#include "popmf/random.hpp"
#include "popmf/svg.hpp"

#ifndef POPMF_VERSION
#define POPMF_VERSION "unknown"
#endif

namespace popmf {

namespace fs = std::filesystem;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

void optional_field(CsvWriter& csv, double v) {
  if (std::isfinite(v)) {
    csv.field(v);
  } else {
    csv.field("");
  }
}

/// Tracks every file written so a failed run leaves nothing behind.
class OutputDir {
 public:
  explicit OutputDir(fs::path dir) : dir_(std::move(dir)) {
    created_ = !fs::exists(dir_);
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec || !fs::is_directory(dir_)) throw ValidationError("cannot create output directory " + dir_.string());
  }

  const fs::path& path() const noexcept { return dir_; }

  fs::path write(const std::string& name, const std::function<void(std::ostream&)>& fill) {
    const fs::path p = dir_ / name;
    written_.push_back(p);
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw SimulationError("cannot write " + p.string());
    fill(out);
    out.flush();
    if (!out) throw SimulationError("error while writing " + p.string());
    names_.push_back(name);
    return p;
  }

  const std::vector<std::string>& names() const noexcept { return names_; }

  void rollback() noexcept {
    std::error_code ec;
    for (const auto& p : written_) fs::remove(p, ec);
    if (created_ && fs::is_empty(dir_, ec)) fs::remove(dir_, ec);
  }

 private:
  fs::path dir_;
  bool created_ = false;
  std::vector<fs::path> written_;
  std::vector<std::string> names_;
};

struct CaseSeed {
  std::string name;
  std::uint64_t seed;
};

void write_manifest(OutputDir& out, RunArtifacts& art, const ExperimentConfig& config,
                    const std::vector<CaseSeed>& seeds) {
  auto j = detail::parse_json(config_json(config), "manifest");
  detail::Json m;
  m["version"] = POPMF_VERSION;
  m["experiment"] = std::string(to_string(config.kind));
  m["case_seed_rule"] = "case c: mix64(seed ^ mix64(c + 0x63617365)); replicate k: replicate_seed(case_seed, k)";
  detail::Json cases = detail::Json::array();
  for (const auto& s : seeds) {
    detail::Json c;
    c["case"] = s.name;
    c["seed"] = s.seed;
    cases.push_back(c);
  }
  m["cases"] = cases;
  m["files"] = out.names();
  j["manifest"] = m;
  art.manifest = out.write("manifest.txt", [&](std::ostream& os) { os << j.dump(2) << '\n'; });
}

template <class Body>
RunArtifacts with_output(const ExperimentConfig& config, Body&& body) {
  validate_config(config);
  OutputDir out(config.output);
  RunArtifacts art;
  art.output_dir = out.path();
  try {
    std::vector<CaseSeed> seeds;
    body(out, art, seeds);
    write_manifest(out, art, config, seeds);
  } catch (...) {
    out.rollback();
    throw;
  }
  for (const auto& name : out.names()) {
    const fs::path p = out.path() / name;
    if (p.extension() == ".csv") art.csv_files.push_back(p);
    if (p.extension() == ".svg") art.svg_files.push_back(p);
  }
  return art;
}

std::string sanitize(const std::string& name) {
  std::string out;
  for (char c : name) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-') ? c : '_';
  return out;
}

/// Builds the initial state of one replicate or case from the config.
PopulationState make_init(const ExperimentConfig& config, const PopulationModel& model, std::uint64_t seed) {
  const auto& init = config.init;
  if (init.type == "clustered") return init_clustered(model.n_agents(), init.fraction, model.n_states());
  if (init.type == "random") return init_random(model.n_agents(), init.p, seed, model.n_states());
  auto state = load_initial_state(init.path, model.states());
  if (state.size() != model.n_agents()) {
    std::ostringstream msg;
    msg << "initial state file lists " << state.size() << " agents; the model has " << model.n_agents();
    throw ValidationError(msg.str());
  }
  return state;
}

bool cmfa_applicable(const PopulationModel& model) {
  return model.policy().homogeneous_agents() && model.uniform_rates();
}

std::vector<std::vector<double>> cmfa_curve(const PopulationModel& model, std::span<const double> x0,
                                            std::span<const double> grid, double h) {
  return nimfa_average(solve_cmfa(model, x0, grid, h));
}

double finite_quantile(const std::vector<DeviationRecord>& recs, bool nimfa, double q) {
  std::vector<double> v;
  for (const auto& r : recs) v.push_back(nimfa ? r.sup_dev_nimfa : r.sup_dev_cmfa);
  return quantile(std::move(v), q);
}

std::string case_name(const ModelSpec& spec, std::optional<double> density) {
  if (density) return "density=" + format_double(*density);
  return spec.matrix.type;
}

struct ReferenceOptions {
  bool cmfa = true;
  bool nimfa = true;
};

/// Simulates one case and computes the requested references and deviations.
CaseResult run_case(const ExperimentConfig& config, const std::string& name, const PopulationModel& model,
                    std::uint64_t seed, std::span<const double> grid, ReferenceOptions refs) {
  require_valid_policy(model);
  CaseResult res;
  res.name = name;
  res.n_agents = model.n_agents();
  res.seed = seed;
  res.density = density_report(model.interaction());
  const double h = config.ode_step.value_or(default_ode_step(model));
  const bool resample = config.init.type == "random" && config.init.resample;
  const bool want_cmfa = refs.cmfa && cmfa_applicable(model);
  const ReplicateOptions options{config.threads, true};

  std::optional<PopulationState> init0;
  if (resample) {
    InitSampler sampler = [&](std::size_t, std::uint64_t s) { return make_init(config, model, s); };
    res.ensemble = replicate(model, sampler, config.horizon, grid, config.replicates, seed, options);
  } else {
    init0 = make_init(config, model, initial_state_seed(seed));
    res.ensemble = replicate(model, *init0, config.horizon, grid, config.replicates, seed, options);
  }

  // Plotted references: from the shared initial state, or from the ensemble
  // mean of Y_av(0) when every replicate has its own.
  if (want_cmfa) {
    const auto x0 = init0 ? population_average(*init0) : res.ensemble.mean.front();
    res.cmfa = cmfa_curve(model, x0, grid, h);
  }
  if (refs.nimfa && init0) {
    const auto sol = solve_nimfa(model, MixedProfile::from_state(*init0), grid, h);
    res.nimfa = nimfa_average(sol);
    res.max_projection_correction = sol.max_projection_correction;
    if (sol.flagged()) {
      throw SimulationError("NIMFA simplex corrections reached " + format_double(sol.max_projection_correction) +
                            "; reduce ode_step");
    }
  }

  const std::size_t m = config.replicates;
  res.deviations = run_indexed(m, config.threads, [&](std::size_t k) {
    const auto& sample = res.ensemble.replicates[k];
    if (!resample) {
      return make_deviation_record(grid, sample, want_cmfa ? &res.cmfa : nullptr,
                                   refs.nimfa ? &res.nimfa : nullptr);
    }
    // Each replicate is compared with references started from its own Y(0).
    std::vector<std::vector<double>> cmfa_k, nimfa_k;
    if (want_cmfa) cmfa_k = cmfa_curve(model, sample.front(), grid, h);
    if (refs.nimfa) {
      const auto init_k = make_init(config, model, initial_state_seed(replicate_seed(seed, k)));
      nimfa_k = nimfa_average(solve_nimfa(model, MixedProfile::from_state(init_k), grid, h));
    }
    return make_deviation_record(grid, sample, want_cmfa ? &cmfa_k : nullptr, refs.nimfa ? &nimfa_k : nullptr);
  });
  res.ensemble.sup_deviations.clear();
  for (const auto& d : res.deviations) {
    res.ensemble.sup_deviations.push_back(want_cmfa ? d.sup_dev_cmfa : d.sup_dev_nimfa);
  }
  res.median_dev_cmfa = finite_quantile(res.deviations, false, 0.5);
  res.p95_dev_cmfa = finite_quantile(res.deviations, false, 0.95);
  res.median_dev_nimfa = finite_quantile(res.deviations, true, 0.5);
  res.p95_dev_nimfa = finite_quantile(res.deviations, true, 0.95);
  if (!res.nimfa.empty() && model.n_states() >= 2) {
    std::vector<double> share;
    for (const auto& row : res.nimfa) share.push_back(row[1]);
    res.nimfa_interior_extrema = interior_extrema(share);
  }
  return res;
}

void write_deviations(OutputDir& out, const std::vector<CaseResult>& cases) {
  out.write("deviations.csv", [&](std::ostream& os) {
    CsvWriter csv(os);
    csv.field("case").field("replicate").field("seed").field("sup_dev_cmfa").field("sup_dev_nimfa").end_row();
    for (const auto& c : cases) {
      for (std::size_t k = 0; k < c.deviations.size(); ++k) {
        csv.field(c.name).field(k).field(static_cast<unsigned long long>(replicate_seed(c.seed, k)));
        optional_field(csv, c.deviations[k].sup_dev_cmfa);
        optional_field(csv, c.deviations[k].sup_dev_nimfa);
        csv.end_row();
      }
    }
  });
}

void write_density_rows(OutputDir& out, const std::vector<DensityRow>& rows) {
  out.write("density.csv", [&](std::ostream& os) {
    CsvWriter csv(os);
    csv.field("case").field("n").field("theta").field("lambda").field("lambda_residual");
    csv.field("lambda_iterations").field("max_col_sum").field("circulant_max").end_row();
    for (const auto& r : rows) {
      csv.field(r.name).field(r.n_agents).field(r.report.theta).field(r.report.lambda);
      csv.field(r.report.lambda_residual).field(r.report.lambda_iterations).field(r.report.max_col_sum);
      optional_field(csv, r.circulant_max);
      csv.end_row();
    }
  });
}

double circulant_max_for(const MatrixSpec& spec) {
  if (spec.type != "nearest_neighbor") return kNaN;
  const auto mu = circulant_spectrum(spec.n, spec.density);
  double best = 0.0;
  for (std::size_t k = 1; k < mu.size(); ++k) best = std::max(best, std::abs(mu[k]));
  return best;
}

/// Labels of the plotted state (the second one).
std::size_t plotted_state(const StateSpace& states) { return states.size() >= 2 ? 1 : 0; }

void write_case_plot(OutputDir& out, const CaseResult& c, const StateSpace& states) {
  const std::size_t s = plotted_state(states);
  Plot plot;
  plot.title = c.name + " (N=" + std::to_string(c.n_agents) + ", M=" + std::to_string(c.ensemble.m) + ")";
  plot.x_label = "t";
  plot.y_label = "share in state " + states.label(s);
  PlotBand band;
  PlotSeries mean{"Y_av mean", {}, {}, kPalette[0], false, false};
  for (std::size_t t = 0; t < c.ensemble.grid.size(); ++t) {
    const double mu = c.ensemble.mean[t][s];
    const double se = c.ensemble.standard_error(t, s);
    band.x.push_back(c.ensemble.grid[t]);
    band.lo.push_back(mu - 2.0 * se);
    band.hi.push_back(mu + 2.0 * se);
    mean.x.push_back(c.ensemble.grid[t]);
    mean.y.push_back(mu);
  }
  band.color = kPalette[0];
  plot.bands.push_back(band);
  plot.series.push_back(mean);
  auto add_curve = [&](const std::vector<std::vector<double>>& curve, const char* name, const char* color,
                       bool dashed) {
    if (curve.empty()) return;
    PlotSeries ps{name, c.ensemble.grid, {}, color, dashed, false};
    for (const auto& row : curve) ps.y.push_back(row[s]);
    plot.series.push_back(ps);
  };
  add_curve(c.nimfa, "NIMFA average", kPalette[1], false);
  add_curve(c.cmfa, "CMFA", kPalette[2], true);
  out.write("plot_" + sanitize(c.name) + ".svg", [&](std::ostream& os) { write_svg(os, plot); });
}

}  // namespace

// ---------------------------------------------------------------------------

PopulationState init_clustered(std::size_t n, double fraction, std::size_t n_states) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw ValidationError("clustered fraction must lie in [0, 1]");
  const auto k = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
  std::vector<StateIndex> a(n, 0);
  for (std::size_t i = 0; i < std::min(k, n); ++i) a[i] = 1;
  return PopulationState(n_states, std::move(a));
}

PopulationState init_random(std::size_t n, double p_first, std::uint64_t seed, std::size_t n_states) {
  if (!(p_first >= 0.0 && p_first <= 1.0)) throw ValidationError("random init probability must lie in [0, 1]");
  CounterRng rng(seed);
  std::vector<StateIndex> a(n);
  for (auto& s : a) s = rng.uniform() < p_first ? 0 : 1;
  return PopulationState(n_states, std::move(a));
}

PopulationState load_initial_state(const fs::path& path, const StateSpace& states) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open initial state file " + path.string());
  std::string line;
  std::map<std::size_t, StateIndex> assigned;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (line_no == 1 && fields.size() == 2 && fields[0] == "agent") continue;
    auto fail = [&](const std::string& why) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": " + why);
    };
    if (fields.size() != 2) fail("expected `agent,state`");
    std::size_t agent = 0;
    try {
      std::size_t used = 0;
      agent = std::stoull(fields[0], &used);
      if (used != fields[0].size()) fail("bad agent index");
    } catch (const std::logic_error&) {
      fail("bad agent index");
    }
    const auto s = states.find(fields[1]);
    if (!s) fail("unknown state label '" + fields[1] + "'");
    if (!assigned.emplace(agent, static_cast<StateIndex>(*s)).second) fail("agent listed twice");
  }
  std::vector<StateIndex> a(assigned.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto it = assigned.find(i);
    if (it == assigned.end()) throw ValidationError(path.string() + ": agent " + std::to_string(i) + " is missing");
    a[i] = it->second;
  }
  return PopulationState(states.size(), std::move(a));
}

std::uint64_t case_seed(std::uint64_t seed, std::size_t c) { return mix64(seed ^ mix64(c + 0x63617365ULL)); }

double quantile(std::vector<double> values, double q) {
  std::erase_if(values, [](double v) { return !std::isfinite(v); });
  if (values.empty()) return kNaN;
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

std::size_t interior_extrema(std::span<const double> series, double tol) {
  std::size_t count = 0;
  int last_sign = 0;
  for (std::size_t t = 1; t < series.size(); ++t) {
    const double d = series[t] - series[t - 1];
    if (std::abs(d) <= tol) continue;
    const int sign = d > 0 ? 1 : -1;
    if (last_sign != 0 && sign != last_sign) ++count;
    last_sign = sign;
  }
  return count;
}

LogLogFit fit_loglog(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw ValidationError("fit_loglog needs at least two points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const auto n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw ValidationError("fit_loglog needs positive values");
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  LogLogFit fit;
  fit.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  fit.intercept = (sy - fit.slope * sx) / n;
  return fit;
}

// ---------------------------------------------------------------------------

RunArtifacts run_compare(const ExperimentConfig& config) {
  return with_output(config, [&](OutputDir& out, RunArtifacts& art, std::vector<CaseSeed>& seeds) {
    const auto grid = uniform_grid(config.horizon, config.grid_step);
    std::vector<std::pair<std::string, ModelSpec>> specs;
    if (config.densities.empty()) {
      specs.emplace_back(case_name(config.model, std::nullopt), config.model);
    } else {
      for (double d : config.densities) {
        ModelSpec s = config.model;
        s.matrix.density = d;
        specs.emplace_back(case_name(s, d), s);
      }
    }
    std::optional<StateSpace> states;
    for (std::size_t c = 0; c < specs.size(); ++c) {
      const auto model = build_model(specs[c].second);
      if (!states) states = model.states();
      const auto seed = case_seed(config.seed, c);
      seeds.push_back({specs[c].first, seed});
      art.cases.push_back(run_case(config, specs[c].first, model, seed, grid, {true, config.nimfa}));
      art.densities.push_back(
          {specs[c].first, model.n_agents(), art.cases.back().density, circulant_max_for(specs[c].second.matrix)});
    }

    out.write("timeseries.csv", [&](std::ostream& os) {
      CsvWriter csv(os);
      csv.field("case").field("t");
      for (const char* prefix : {"mean_", "se_", "nimfa_", "cmfa_"}) {
        for (const auto& l : states->labels()) csv.field(prefix + l);
      }
      csv.end_row();
      for (const auto& c : art.cases) {
        for (std::size_t t = 0; t < grid.size(); ++t) {
          csv.field(c.name).field(grid[t]);
          for (double v : c.ensemble.mean[t]) csv.field(v);
          for (std::size_t s = 0; s < states->size(); ++s) csv.field(c.ensemble.standard_error(t, s));
          for (std::size_t s = 0; s < states->size(); ++s) optional_field(csv, c.nimfa.empty() ? kNaN : c.nimfa[t][s]);
          for (std::size_t s = 0; s < states->size(); ++s) optional_field(csv, c.cmfa.empty() ? kNaN : c.cmfa[t][s]);
          csv.end_row();
        }
      }
    });
    write_deviations(out, art.cases);
    out.write("summary.csv", [&](std::ostream& os) {
      CsvWriter csv(os);
      for (const char* h : {"case", "n", "m", "theta", "lambda", "max_col_sum", "median_dev_cmfa", "p95_dev_cmfa",
                            "median_dev_nimfa", "p95_dev_nimfa", "nimfa_interior_extrema",
                            "max_projection_correction"}) {
        csv.field(h);
      }
      csv.end_row();
      for (const auto& c : art.cases) {
        csv.field(c.name).field(c.n_agents).field(c.ensemble.m).field(c.density.theta).field(c.density.lambda);
        csv.field(c.density.max_col_sum);
        optional_field(csv, c.median_dev_cmfa);
        optional_field(csv, c.p95_dev_cmfa);
        optional_field(csv, c.median_dev_nimfa);
        optional_field(csv, c.p95_dev_nimfa);
        if (c.nimfa.empty()) {
          csv.field("");
        } else {
          csv.field(c.nimfa_interior_extrema);
        }
        csv.field(c.max_projection_correction);
        csv.end_row();
      }
    });
    write_density_rows(out, art.densities);
    for (const auto& c : art.cases) write_case_plot(out, c, *states);
  });
}

RunArtifacts run_sweep(const ExperimentConfig& config) {
  return with_output(config, [&](OutputDir& out, RunArtifacts& art, std::vector<CaseSeed>& seeds) {
    const auto grid = uniform_grid(config.horizon, config.grid_step);
    const bool use_cmfa = config.reference != "nimfa";
    const bool use_nimfa = config.reference != "cmfa";
    for (std::size_t c = 0; c < config.sizes.size(); ++c) {
      const std::size_t n = config.sizes[c];
      const auto model = build_model(config.model, n);
      if (use_cmfa && !cmfa_applicable(model)) {
        throw ValidationError("sweep: the CMFA reference needs a shared policy and equal clock rates");
      }
      const auto seed = case_seed(config.seed, c);
      const std::string name = "n=" + std::to_string(n);
      seeds.push_back({name, seed});
      art.cases.push_back(run_case(config, name, model, seed, grid, {use_cmfa, use_nimfa}));
      const auto& res = art.cases.back();
      for (const char* ref : {"cmfa", "nimfa"}) {
        const bool is_nimfa = std::string(ref) == "nimfa";
        if (is_nimfa ? !use_nimfa : !use_cmfa) continue;
        std::vector<double> devs;
        for (const auto& d : res.deviations) devs.push_back(is_nimfa ? d.sup_dev_nimfa : d.sup_dev_cmfa);
        double mean = 0.0;
        for (double d : devs) mean += d / static_cast<double>(devs.size());
        art.sweep.push_back({n, ref, devs.size(), quantile(devs, 0.5), quantile(devs, 0.95), mean,
                             res.density.theta});
      }
    }
    for (const char* ref : {"cmfa", "nimfa"}) {
      std::vector<double> xs, ys;
      for (const auto& p : art.sweep) {
        if (p.reference == ref) {
          xs.push_back(static_cast<double>(p.n_agents));
          ys.push_back(p.median);
        }
      }
      if (xs.size() >= 2) art.fits.push_back({ref, fit_loglog(xs, ys)});
    }

    out.write("sweep.csv", [&](std::ostream& os) {
      CsvWriter csv(os);
      csv.field("n").field("reference").field("m").field("median").field("p95").field("mean").field("theta");
      csv.end_row();
      for (const auto& p : art.sweep) {
        csv.field(p.n_agents).field(p.reference).field(p.m).field(p.median).field(p.p95).field(p.mean);
        csv.field(p.theta).end_row();
      }
    });
    out.write("sweep_fit.csv", [&](std::ostream& os) {
      CsvWriter csv(os);
      csv.field("reference").field("slope").field("intercept").end_row();
      for (const auto& f : art.fits) csv.field(f.reference).field(f.fit.slope).field(f.fit.intercept).end_row();
    });
    write_deviations(out, art.cases);
    for (const auto& c : art.cases) {
      art.densities.push_back({c.name, c.n_agents, c.density, kNaN});
    }
    write_density_rows(out, art.densities);

    Plot plot;
    plot.title = "median sup-deviation vs N";
    plot.x_label = "log10 N";
    plot.y_label = "log10 median sup-deviation";
    std::size_t color = 0;
    for (const auto& f : art.fits) {
      PlotSeries ps{f.reference + " (slope " + format_double(std::round(f.fit.slope * 1000) / 1000) + ")",
                    {},
                    {},
                    kPalette[color++ % 6],
                    false,
                    true};
      for (const auto& p : art.sweep) {
        if (p.reference != f.reference) continue;
        ps.x.push_back(std::log10(static_cast<double>(p.n_agents)));
        ps.y.push_back(std::log10(p.median));
      }
      plot.series.push_back(ps);
    }
    out.write("plot_sweep.svg", [&](std::ostream& os) { write_svg(os, plot); });
  });
}

RunArtifacts run_dt_convergence(const ExperimentConfig& config) {
  return with_output(config, [&](OutputDir& out, RunArtifacts& art, std::vector<CaseSeed>& seeds) {
    if (config.init.type == "random" && config.init.resample) {
      throw ValidationError("dt-convergence uses one initial state; set init.resample to false");
    }
    const auto model = build_model(config.model);
    require_valid_policy(model);
    const std::size_t k = model.n_states();
    const std::size_t m = config.replicates;
    const double horizon = config.horizon;
    const std::vector<double> terminal{horizon};
    const auto init = make_init(config, model, initial_state_seed(case_seed(config.seed, 0)));

    std::optional<GeneratorMatrix> gen;
    try {
      gen = build_generator(model);
    } catch (const ValidationError&) {
      gen.reset();  // too large for the exact oracle
    }

    auto terminal_stats = [&](std::uint64_t base, const std::function<Trajectory(std::uint64_t)>& sim) {
      auto finals = run_indexed(m, config.threads, [&](std::size_t r) {
        return sample_average(sim(replicate_seed(base, r)), terminal).front();
      });
      EnsembleAccumulator acc(terminal, k);
      for (const auto& f : finals) acc.add({f});
      return acc.finish();
    };

    const auto ct_seed = case_seed(config.seed, 0);
    seeds.push_back({"ct", ct_seed});
    const auto ct = terminal_stats(ct_seed, [&](std::uint64_t s) { return simulate_ct(model, init, horizon, s); });
    std::vector<double> ct_mc = ct.mean.front();
    std::vector<double> ct_se(k);
    for (std::size_t s = 0; s < k; ++s) ct_se[s] = ct.standard_error(0, s);
    std::vector<double> ct_exact;
    std::vector<double> init_dist;
    if (gen) {
      init_dist = point_distribution(*gen, init);
      ct_exact = exact_marginals(*gen, init_dist, terminal).front();
    }
    art.ct_reference_exact = gen.has_value();
    art.ct_reference = gen ? ct_exact : ct_mc;
    art.ct_reference_se = gen ? std::vector<double>(k, 0.0) : ct_se;

    for (std::size_t j = 0; j < config.xis.size(); ++j) {
      const double xi = config.xis[j];
      if (xi * model.total_rate() > 1.0 + 1e-12) {
        throw ValidationError("xi = " + format_double(xi) + " violates xi * sum r_i <= 1 (sum r_i = " +
                              format_double(model.total_rate()) + ")");
      }
      const auto seed = case_seed(config.seed, j + 1);
      seeds.push_back({"xi=" + format_double(xi), seed});
      const auto dt =
          terminal_stats(seed, [&](std::uint64_t s) { return simulate_dt(model, init, horizon, xi, s); });
      DtPoint p;
      p.xi = xi;
      p.steps = static_cast<std::size_t>(std::floor(horizon / xi + 1e-9));
      p.mean = dt.mean.front();
      p.standard_error.resize(k);
      for (std::size_t s = 0; s < k; ++s) p.standard_error[s] = dt.standard_error(0, s);
      if (gen) p.exact = exact_dt_marginal(*gen, init_dist, xi, horizon);
      p.gap = -1.0;
      for (std::size_t s = 0; s < k; ++s) {
        const double g = std::abs(p.mean[s] - art.ct_reference[s]);
        if (g > p.gap) {
          p.gap = g;
          p.gap_se = std::hypot(p.standard_error[s], art.ct_reference_se[s]);
        }
        if (gen) p.gap_exact = std::max(p.gap_exact, std::abs(p.exact[s] - ct_exact[s]));
      }
      if (!gen) p.gap_exact = kNaN;
      art.dt.push_back(p);
    }

    const auto& labels = model.states().labels();
    out.write("ct_reference.csv", [&](std::ostream& os) {
      CsvWriter csv(os);
      csv.field("source").field("m");
      for (const auto& l : labels) csv.field("mean_" + l);
      for (const auto& l : labels) csv.field("se_" + l);
      csv.end_row();
      csv.field("monte_carlo").field(m);
      for (double v : ct_mc) csv.field(v);
      for (double v : ct_se) csv.field(v);
      csv.end_row();
      if (gen) {
        csv.field("exact").field("");
        for (double v : ct_exact) csv.field(v);
        for (std::size_t s = 0; s < k; ++s) csv.field(0.0);
        csv.end_row();
      }
    });
    out.write("dt_convergence.csv", [&](std::ostream& os) {
      CsvWriter csv(os);
      csv.field("xi").field("steps").field("m");
      for (const auto& l : labels) csv.field("mean_" + l);
      for (const auto& l : labels) csv.field("se_" + l);
      for (const auto& l : labels) csv.field("exact_" + l);
      csv.field("gap").field("gap_se").field("gap_exact").field("ratio").field("ratio_resolved");
      csv.field("ratio_exact").end_row();
      for (std::size_t j = 0; j < art.dt.size(); ++j) {
        const auto& p = art.dt[j];
        csv.field(p.xi).field(p.steps).field(m);
        for (double v : p.mean) csv.field(v);
        for (double v : p.standard_error) csv.field(v);
        for (std::size_t s = 0; s < k; ++s) optional_field(csv, p.exact.empty() ? kNaN : p.exact[s]);
        csv.field(p.gap).field(p.gap_se);
        optional_field(csv, p.gap_exact);
        if (j == 0) {
          csv.field("").field("").field("");
        } else {
          const auto& q = art.dt[j - 1];
          csv.field(q.gap / p.gap);
          csv.field(static_cast<int>(q.gap > 3.0 * q.gap_se && p.gap > 3.0 * p.gap_se));
          optional_field(csv, q.gap_exact / p.gap_exact);
        }
        csv.end_row();
      }
    });

    Plot plot;
    plot.title = "terminal-mean gap between step-xi and continuous-time chains";
    plot.x_label = "log2 xi";
    plot.y_label = "log2 gap";
    PlotSeries mc{"Monte Carlo", {}, {}, kPalette[0], false, true};
    PlotSeries ex{"exact", {}, {}, kPalette[1], true, true};
    for (const auto& p : art.dt) {
      mc.x.push_back(std::log2(p.xi));
      mc.y.push_back(p.gap > 0 ? std::log2(p.gap) : kNaN);
      ex.x.push_back(std::log2(p.xi));
      ex.y.push_back(p.gap_exact > 0 ? std::log2(p.gap_exact) : kNaN);
    }
    plot.series.push_back(mc);
    if (gen) plot.series.push_back(ex);
    out.write("plot_dt_convergence.svg", [&](std::ostream& os) { write_svg(os, plot); });
  });
}

RunArtifacts run_density(const ExperimentConfig& config) {
  return with_output(config, [&](OutputDir& out, RunArtifacts& art, std::vector<CaseSeed>&) {
    std::vector<std::pair<std::string, MatrixSpec>> specs;
    if (config.densities.empty()) {
      specs.emplace_back(config.model.matrix.type, config.model.matrix);
    } else {
      for (double d : config.densities) {
        MatrixSpec s = config.model.matrix;
        s.density = d;
        specs.emplace_back("density=" + format_double(d), s);
      }
    }
    for (const auto& [name, spec] : specs) {
      const auto w = build_interaction(spec);
      art.densities.push_back({name, w.size(), density_report(w), circulant_max_for(spec)});
      if (w.size() <= 256) {
        out.write("matrix_" + sanitize(name) + ".csv", [&](std::ostream& os) { write_dense_csv(os, w); });
      }
    }
    write_density_rows(out, art.densities);
  });
}

RunArtifacts run_experiment(const ExperimentConfig& config) {
  switch (config.kind) {
    case ExperimentKind::density: return run_density(config);
    case ExperimentKind::sweep: return run_sweep(config);
    case ExperimentKind::dt_convergence: return run_dt_convergence(config);
    case ExperimentKind::compare:
    case ExperimentKind::fig1:
    case ExperimentKind::fig2: return run_compare(config);
  }
  throw ValidationError("unknown experiment kind");
}

}  // namespace popmf
