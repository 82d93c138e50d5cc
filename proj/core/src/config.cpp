#include "popmf/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json_support.hpp"

namespace popmf {

using detail::Json;
using detail::ObjectReader;

std::string_view to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::density: return "density";
    case ExperimentKind::compare: return "compare";
    case ExperimentKind::sweep: return "sweep";
    case ExperimentKind::dt_convergence: return "dt-convergence";
    case ExperimentKind::fig1: return "fig1";
    case ExperimentKind::fig2: return "fig2";
  }
  return "unknown";
}

ExperimentKind parse_experiment_kind(std::string_view name) {
  for (auto kind : {ExperimentKind::density, ExperimentKind::compare, ExperimentKind::sweep,
                    ExperimentKind::dt_convergence, ExperimentKind::fig1, ExperimentKind::fig2}) {
    if (to_string(kind) == name) return kind;
  }
  throw ValidationError("unknown experiment kind '" + std::string(name) + "'");
}

namespace {

ModelSpec figure_model(double density) {
  ModelSpec m;
  m.policy.type = "logit";
  m.policy.eta = 0.1;
  m.clock_rates = {1.0};
  m.matrix.type = "nearest_neighbor";
  m.matrix.n = 1000;
  m.matrix.density = density;
  return m;
}

bool needs_model(ExperimentKind kind) {
  return kind == ExperimentKind::compare || kind == ExperimentKind::sweep || kind == ExperimentKind::dt_convergence;
}

InitSpec init_from_json(const Json& j, const std::filesystem::path& base_dir) {
  ObjectReader r(j, "init");
  InitSpec init;
  init.type = r.require<std::string>("type");
  if (init.type == "clustered") {
    init.fraction = r.require<double>("fraction");
  } else if (init.type == "random") {
    init.p = r.require<double>("p");
    init.resample = r.get<bool>("resample", false);
  } else if (init.type == "file") {
    init.path = detail::resolve_path(r.require<std::string>("path"), base_dir);
  } else {
    throw ValidationError("init: unknown type '" + init.type + "'");
  }
  r.finish();
  return init;
}

Json init_to_json(const InitSpec& init) {
  Json j;
  j["type"] = init.type;
  if (init.type == "clustered") {
    j["fraction"] = init.fraction;
  } else if (init.type == "random") {
    j["p"] = init.p;
    j["resample"] = init.resample;
  } else {
    j["path"] = init.path.string();
  }
  return j;
}

}  // namespace

ExperimentConfig default_config(ExperimentKind kind) {
  ExperimentConfig c;
  c.kind = kind;
  switch (kind) {
    case ExperimentKind::fig1:
      c.model = figure_model(0.1);
      c.init = InitSpec{"clustered", 0.2, 0.8, {}, false};
      c.densities = {0.1, 0.5};
      c.replicates = 50;
      c.ode_step = 0.01;
      c.nimfa = true;
      break;
    case ExperimentKind::fig2:
      c.model = figure_model(0.2);
      c.init = InitSpec{"random", 0.2, 0.8, {}, true};
      c.densities = {0.2, 0.5, 0.8};
      c.replicates = 20;
      c.ode_step = 0.01;
      c.nimfa = false;
      break;
    case ExperimentKind::sweep:
      c.horizon = 5.0;
      break;
    case ExperimentKind::dt_convergence:
      c.horizon = 1.0;
      break;
    default:
      break;
  }
  return c;
}

ExperimentConfig parse_config(std::string_view json_text, const std::filesystem::path& base_dir) {
  const Json j = detail::parse_json(json_text, "config");
  ObjectReader r(j, "config");
  const auto kind = parse_experiment_kind(r.require<std::string>("experiment"));
  ExperimentConfig c = default_config(kind);
  r.skip("manifest");

  if (r.has("model")) {
    c.model = detail::model_spec_from_json(r.at("model"), base_dir);
  } else if (kind == ExperimentKind::density && r.has("matrix")) {
    c.model.matrix = detail::matrix_from_json(r.at("matrix"), base_dir, "matrix");
  } else if (needs_model(kind) || kind == ExperimentKind::density) {
    throw ValidationError(std::string("config: experiment '") + std::string(to_string(kind)) + "' needs a " +
                          (kind == ExperimentKind::density ? "'matrix' or 'model'" : "'model'") + " section");
  }

  c.horizon = r.get<double>("horizon", c.horizon);
  c.grid_step = r.get<double>("grid_step", c.grid_step);
  if (r.has("ode_step")) {
    const Json& h = r.at("ode_step");
    if (h.is_null()) {
      c.ode_step.reset();
    } else if (h.is_number()) {
      c.ode_step = h.get<double>();
    } else {
      throw ValidationError("config: ode_step must be a number or null");
    }
  }
  if (r.has("replicates")) {
    const auto m = r.require<long long>("replicates");
    if (m < 1) throw ValidationError("config: replicates must be at least 1");
    c.replicates = static_cast<std::size_t>(m);
  }
  c.seed = r.get<std::uint64_t>("seed", c.seed);
  if (r.has("threads")) {
    const auto t = r.require<long long>("threads");
    if (t < 1) throw ValidationError("config: threads must be at least 1");
    c.threads = static_cast<unsigned>(t);
  }
  if (r.has("init")) c.init = init_from_json(r.at("init"), base_dir);
  c.densities = r.get<std::vector<double>>("densities", c.densities);
  if (r.has("sizes")) {
    const auto sizes = r.require<std::vector<long long>>("sizes");
    c.sizes.clear();
    for (auto n : sizes) {
      if (n < 1) throw ValidationError("config: sizes must be positive");
      c.sizes.push_back(static_cast<std::size_t>(n));
    }
  }
  c.xis = r.get<std::vector<double>>("xis", c.xis);
  c.reference = r.get<std::string>("reference", c.reference);
  c.nimfa = r.get<bool>("nimfa", c.nimfa);
  c.output = detail::resolve_path(r.get<std::string>("output", c.output.string()), base_dir);
  r.finish();
  validate_config(c);
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str(), path.parent_path());
}

std::string config_json(const ExperimentConfig& c) {
  Json j;
  j["experiment"] = std::string(to_string(c.kind));
  if (c.kind == ExperimentKind::density) {
    j["matrix"] = detail::matrix_to_json(c.model.matrix);
  } else {
    j["model"] = detail::model_spec_to_json(c.model);
  }
  j["horizon"] = c.horizon;
  j["grid_step"] = c.grid_step;
  j["ode_step"] = c.ode_step ? Json(*c.ode_step) : Json(nullptr);
  j["replicates"] = c.replicates;
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  j["init"] = init_to_json(c.init);
  j["densities"] = c.densities;
  j["sizes"] = c.sizes;
  j["xis"] = c.xis;
  j["reference"] = c.reference;
  j["nimfa"] = c.nimfa;
  j["output"] = c.output.string();
  return j.dump(2);
}

void validate_config(const ExperimentConfig& c) {
  auto fail = [](const std::string& msg) { throw ValidationError("config: " + msg); };
  if (!(c.horizon > 0.0) || !std::isfinite(c.horizon)) fail("horizon must be positive");
  if (!(c.grid_step > 0.0) || c.grid_step > c.horizon) fail("grid_step must lie in (0, horizon]");
  if (c.ode_step && !(*c.ode_step > 0.0)) fail("ode_step must be positive");
  if (c.replicates < 1) fail("replicates must be at least 1");
  if (c.threads < 1) fail("threads must be at least 1");
  if (c.init.type == "clustered" && !(c.init.fraction >= 0.0 && c.init.fraction <= 1.0)) {
    fail("init.fraction must lie in [0, 1]");
  }
  if (c.init.type == "random" && !(c.init.p >= 0.0 && c.init.p <= 1.0)) fail("init.p must lie in [0, 1]");
  for (double d : c.densities) {
    if (!(d > 0.0 && d <= 1.0)) fail("densities must lie in (0, 1]");
  }
  if (!c.densities.empty() && c.model.matrix.type != "nearest_neighbor") {
    fail("densities apply to nearest_neighbor matrices only");
  }
  for (double xi : c.xis) {
    if (!(xi > 0.0)) fail("xis must be positive");
  }
  if (c.reference != "cmfa" && c.reference != "nimfa" && c.reference != "both") {
    fail("reference must be cmfa, nimfa or both");
  }
  if (c.kind == ExperimentKind::sweep && c.sizes.size() < 3) fail("a sweep needs at least three sizes");
  if (c.kind == ExperimentKind::dt_convergence && c.xis.empty()) fail("dt-convergence needs a list of xis");
  if (c.kind == ExperimentKind::sweep && c.model.matrix.type != "complete" &&
      c.model.matrix.type != "nearest_neighbor" && c.model.matrix.type != "ring") {
    fail("sweeps need a generated matrix type (complete, nearest_neighbor or ring)");
  }
}

}  // namespace popmf
