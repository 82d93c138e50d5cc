#include "popmf/meanfield.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "popmf/csv.hpp"
#include "popmf/error.hpp"

namespace popmf {

namespace {

/// Fills q (k x k, row-major) with rho^{alpha beta}(z) for one agent.
void rate_matrix(const RatePolicy& policy, std::size_t agent, std::span<const double> z, std::span<double> q) {
  const std::size_t k = policy.n_states();
  for (std::size_t a = 0; a < k; ++a) {
    auto row = q.subspan(a * k, k);
    std::fill(row.begin(), row.end(), 0.0);
    policy.row(agent, a, z, row);
  }
}

/// out^alpha = r (sum_beta y^beta q[beta][alpha] - y^alpha sum_beta q[alpha][beta]).
void flow(std::span<const double> q, double r, std::span<const double> y, std::span<double> out) {
  const std::size_t k = y.size();
  for (std::size_t a = 0; a < k; ++a) out[a] = 0.0;
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = 0; b < k; ++b) {
      if (a == b) continue;
      const double moved = y[a] * q[a * k + b];
      out[a] -= moved;
      out[b] += moved;
    }
  }
  for (std::size_t a = 0; a < k; ++a) out[a] *= r;
}

void require_shared_policy(const RatePolicy& policy, const char* what) {
  if (!policy.homogeneous_agents()) {
    throw ValidationError(std::string(what) + " needs a policy shared by all agents; '" + policy.name() +
                          "' is agent-specific");
  }
}

void require_cmfa_model(const PopulationModel& model, const char* what) {
  require_shared_policy(model.policy(), what);
  if (!model.uniform_rates()) throw ValidationError(std::string(what) + " needs equal clock rates");
}

void check_finite(std::span<const double> dy, double t, std::size_t n_states) {
  for (std::size_t c = 0; c < dy.size(); ++c) {
    if (!std::isfinite(dy[c])) {
      std::ostringstream msg;
      msg << "non-finite derivative at t=" << t << " for agent " << c / n_states << " state " << c % n_states;
      throw SimulationError(msg.str());
    }
  }
}

/// Clip-and-renormalize each agent's vector; returns the largest change.
double repair_simplex(std::span<double> y, std::size_t n_states) {
  double worst = 0.0;
  for (std::size_t off = 0; off < y.size(); off += n_states) {
    auto v = y.subspan(off, n_states);
    double lo = v[0], hi = v[0], sum = 0.0;
    for (double x : v) {
      lo = std::min(lo, x);
      hi = std::max(hi, x);
      sum += x;
    }
    const double drift = std::max({-lo, hi - 1.0, std::abs(sum - 1.0)});
    if (drift <= 1e-12) continue;
    double clipped_sum = 0.0;
    for (double& x : v) {
      x = std::clamp(x, 0.0, 1.0);
      clipped_sum += x;
    }
    if (!(clipped_sum > 0.0)) throw SimulationError("simplex repair found an all-zero vector");
    for (std::size_t s = 0; s < n_states; ++s) {
      const double old = y[off + s];
      v[s] /= clipped_sum;
      worst = std::max(worst, std::abs(v[s] - old));
    }
    // Include the clipping itself in the reported correction.
    worst = std::max(worst, drift);
  }
  return worst;
}

}  // namespace

void cmfa_rhs(const RatePolicy& policy, double r, std::span<const double> x, std::span<double> out) {
  require_shared_policy(policy, "cmfa_rhs");
  const std::size_t k = policy.n_states();
  std::vector<double> q(k * k);
  rate_matrix(policy, 0, x, q);
  flow(q, r, x, out);
}

std::vector<double> cmfa_rhs(const RatePolicy& policy, double r, std::span<const double> x) {
  std::vector<double> out(x.size());
  cmfa_rhs(policy, r, x, out);
  return out;
}

void nimfa_rhs(const PopulationModel& model, std::span<const double> y, std::span<double> out) {
  const std::size_t n = model.n_agents();
  const std::size_t k = model.n_states();
  const auto& w = model.interaction();
  const auto& policy = model.policy();
  std::vector<double> ybar(k), q(k * k);
  if (w.homogeneous()) {
    std::fill(ybar.begin(), ybar.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t s = 0; s < k; ++s) ybar[s] += y[i * k + s];
    }
    for (auto& v : ybar) v /= static_cast<double>(n);
    if (policy.homogeneous_agents()) rate_matrix(policy, 0, ybar, q);
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!w.homogeneous()) {
      std::fill(ybar.begin(), ybar.end(), 0.0);
      for (const auto& e : w.row(i)) {
        const double* yj = y.data() + static_cast<std::size_t>(e.index) * k;
        for (std::size_t s = 0; s < k; ++s) ybar[s] += e.weight * yj[s];
      }
    }
    if (!(w.homogeneous() && policy.homogeneous_agents())) rate_matrix(policy, i, ybar, q);
    flow(q, model.clock_rate(i), y.subspan(i * k, k), out.subspan(i * k, k));
  }
}

OdeSolution integrate(const OdeRhs& rhs, const MixedProfile& init, std::span<const double> grid, double h) {
  if (!(h > 0.0) || !std::isfinite(h)) throw ValidationError("integrate: step must be positive");
  if (grid.empty()) throw ValidationError("integrate: empty grid");
  for (std::size_t g = 1; g < grid.size(); ++g) {
    if (!(grid[g] > grid[g - 1])) throw ValidationError("integrate: grid must be strictly increasing");
  }
  if ((grid.back() - grid.front()) / h > 1e8) throw ValidationError("integrate: more than 1e8 steps");

  const std::size_t k = init.n_states();
  const std::size_t dim = init.values().size();
  OdeSolution sol;
  sol.step = h;
  sol.grid.assign(grid.begin(), grid.end());
  sol.states.reserve(grid.size());
  sol.states.push_back(init);

  std::vector<double> y = init.values();
  std::vector<double> k1(dim), k2(dim), k3(dim), k4(dim), tmp(dim);
  auto stage = [&](double t, std::span<const double> at, std::vector<double>& dk) {
    rhs(t, at, dk);
    check_finite(dk, t, k);
  };

  double t = grid.front();
  for (std::size_t g = 1; g < grid.size(); ++g) {
    const double target = grid[g];
    while (t < target) {
      double dt = h;
      // Shorten the step when it would overshoot or leave a sliver below 1e-9 h.
      if (t + dt >= target - 1e-9 * h) dt = target - t;
      stage(t, y, k1);
      for (std::size_t c = 0; c < dim; ++c) tmp[c] = y[c] + 0.5 * dt * k1[c];
      stage(t + 0.5 * dt, tmp, k2);
      for (std::size_t c = 0; c < dim; ++c) tmp[c] = y[c] + 0.5 * dt * k2[c];
      stage(t + 0.5 * dt, tmp, k3);
      for (std::size_t c = 0; c < dim; ++c) tmp[c] = y[c] + dt * k3[c];
      stage(t + dt, tmp, k4);
      for (std::size_t c = 0; c < dim; ++c) y[c] += dt / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
      sol.max_projection_correction = std::max(sol.max_projection_correction, repair_simplex(y, k));
      t = (dt == target - t) ? target : t + dt;
    }
    MixedProfile snapshot(init.n_agents(), k);
    snapshot.values() = y;
    sol.states.push_back(std::move(snapshot));
  }
  return sol;
}

OdeSolution integrate(const OdeRhs& rhs, const MixedProfile& init, double horizon, double h) {
  if (!(horizon > 0.0)) throw ValidationError("integrate: horizon must be positive");
  if (!(h > 0.0)) throw ValidationError("integrate: step must be positive");
  std::vector<double> grid{0.0};
  for (std::size_t s = 1;; ++s) {
    const double t = static_cast<double>(s) * h;
    if (t >= horizon - 1e-9 * h) break;
    grid.push_back(t);
  }
  grid.push_back(horizon);
  return integrate(rhs, init, grid, h);
}

double default_ode_step(const PopulationModel& model) { return 1e-3 * std::min(1.0, 1.0 / model.max_rate()); }

OdeSolution solve_cmfa(const PopulationModel& model, std::span<const double> x0, std::span<const double> grid,
                       double h) {
  require_cmfa_model(model, "CMFA");
  if (x0.size() != model.n_states()) throw ValidationError("CMFA initial condition has the wrong dimension");
  const double r = model.clock_rate(0);
  const RatePolicy& policy = model.policy();
  MixedProfile init(1, model.n_states(), std::vector<double>(x0.begin(), x0.end()));
  return integrate([&policy, r](double, std::span<const double> x, std::span<double> dx) { cmfa_rhs(policy, r, x, dx); },
                   init, grid, h);
}

OdeSolution solve_nimfa(const PopulationModel& model, const MixedProfile& y0, std::span<const double> grid,
                        double h) {
  if (y0.n_agents() != model.n_agents() || y0.n_states() != model.n_states()) {
    throw ValidationError("NIMFA initial profile does not match the model dimensions");
  }
  return integrate([&model](double, std::span<const double> y, std::span<double> dy) { nimfa_rhs(model, y, dy); },
                   y0, grid, h);
}

std::vector<std::vector<double>> nimfa_average(const OdeSolution& sol) {
  std::vector<std::vector<double>> out;
  out.reserve(sol.states.size());
  for (const auto& s : sol.states) out.push_back(s.average());
  return out;
}

std::vector<double> cmfa_error_term(const PopulationModel& model, const MixedProfile& y) {
  require_cmfa_model(model, "cmfa_error_term");
  const std::size_t n = model.n_agents();
  const std::size_t k = model.n_states();
  if (y.n_agents() != n || y.n_states() != k) throw ValidationError("profile does not match the model dimensions");
  const auto& w = model.interaction();
  const auto& policy = model.policy();
  const std::vector<double> avg = y.average();
  std::vector<double> q_avg(k * k), q_i(k * k), dq(k * k), ybar(k), term(k), err(k, 0.0);
  rate_matrix(policy, 0, avg, q_avg);
  if (w.homogeneous()) return err;
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(ybar.begin(), ybar.end(), 0.0);
    for (const auto& e : w.row(i)) {
      const auto yj = y.agent(e.index);
      for (std::size_t s = 0; s < k; ++s) ybar[s] += e.weight * yj[s];
    }
    rate_matrix(policy, 0, ybar, q_i);
    for (std::size_t c = 0; c < k * k; ++c) dq[c] = q_i[c] - q_avg[c];
    flow(dq, 1.0, y.agent(i), term);
    for (std::size_t s = 0; s < k; ++s) err[s] += term[s];
  }
  const double scale = model.clock_rate(0) / static_cast<double>(n);
  for (auto& e : err) e *= scale;
  return err;
}

void write_cmfa_csv(std::ostream& out, const OdeSolution& sol, const StateSpace& states) {
  CsvWriter csv(out);
  csv.field("t");
  for (const auto& l : states.labels()) csv.field(l);
  csv.end_row();
  for (std::size_t g = 0; g < sol.grid.size(); ++g) {
    csv.field(sol.grid[g]);
    for (double v : sol.states[g].agent(0)) csv.field(v);
    csv.end_row();
  }
}

void write_nimfa_csv(std::ostream& out, const OdeSolution& sol, const StateSpace& states, std::size_t thin) {
  if (thin == 0) throw ValidationError("thinning factor must be positive");
  CsvWriter csv(out);
  csv.field("t").field("agent");
  for (const auto& l : states.labels()) csv.field(l);
  csv.end_row();
  for (std::size_t g = 0; g < sol.grid.size(); ++g) {
    if (g % thin != 0 && g + 1 != sol.grid.size()) continue;
    const auto& profile = sol.states[g];
    for (std::size_t i = 0; i < profile.n_agents(); ++i) {
      csv.field(sol.grid[g]).field(i);
      for (double v : profile.agent(i)) csv.field(v);
      csv.end_row();
    }
  }
}

}  // namespace popmf
