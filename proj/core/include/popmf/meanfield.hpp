#pragma once

#include <cstddef>
#include <functional>
#include <ostream>
#include <span>
#include <vector>

#include "popmf/dynamics.hpp"

namespace popmf {

/// Right-hand side f(t, y) written into dy. y is agent-major (N * |S|).
using OdeRhs = std::function<void(double t, std::span<const double> y, std::span<double> dy)>;

/// Gridded solution. CMFA solutions are stored as one-agent profiles.
struct OdeSolution {
  std::vector<double> grid;
  std::vector<MixedProfile> states;
  double step = 0.0;
  /// Largest clip-and-renormalize change applied after any step.
  double max_projection_correction = 0.0;

  static constexpr double kCorrectionLimit = 1e-6;
  bool flagged() const noexcept { return max_projection_correction >= kCorrectionLimit; }
  std::size_t n_agents() const { return states.empty() ? 0 : states.front().n_agents(); }
  std::size_t n_states() const { return states.empty() ? 0 : states.front().n_states(); }
};

/// phi^alpha(x) = r sum_beta (x^beta rho^{beta alpha}(x) - x^alpha rho^{alpha beta}(x)).
/// Throws ValidationError for a policy that is not shared by all agents.
void cmfa_rhs(const RatePolicy& policy, double r, std::span<const double> x, std::span<double> out);
std::vector<double> cmfa_rhs(const RatePolicy& policy, double r, std::span<const double> x);

/// Phi_i^alpha(y) = r_i sum_beta (y_i^beta rho_i^{beta alpha}(ybar_i) - y_i^alpha rho_i^{alpha beta}(ybar_i))
/// with ybar_i = sum_j w_ij y_j; y and out are agent-major.
void nimfa_rhs(const PopulationModel& model, std::span<const double> y, std::span<double> out);

/// Classical RK4 from grid[0] through every grid point. Between consecutive
/// grid points it takes steps of size h, shortening the last one so each grid
/// point is hit exactly. After every step each agent's vector is clipped to
/// [0, 1] and renormalized if it drifted off the simplex by more than 1e-12.
/// Throws SimulationError on a non-finite derivative.
OdeSolution integrate(const OdeRhs& rhs, const MixedProfile& init, std::span<const double> grid, double h);

/// Grid 0, h, 2h, ..., T with a shortened final step.
OdeSolution integrate(const OdeRhs& rhs, const MixedProfile& init, double horizon, double h);

/// 1e-3 * min(1, 1 / r_max).
double default_ode_step(const PopulationModel& model);

/// CMFA solution from x0 on `grid`. Requires a policy shared by all agents and
/// equal clock rates.
OdeSolution solve_cmfa(const PopulationModel& model, std::span<const double> x0, std::span<const double> grid,
                       double h);
/// NIMFA solution from y0 on `grid`.
OdeSolution solve_nimfa(const PopulationModel& model, const MixedProfile& y0, std::span<const double> grid,
                        double h);

/// y_av(t) = (1/N) sum_i y_i(t) at every grid point.
std::vector<std::vector<double>> nimfa_average(const OdeSolution& sol);

/// The gap between the averaged NIMFA drift and the CMFA field at y_av:
/// (1/N) sum_i Phi_i(y) - phi(y_av), written out term by term. Requires a
/// policy shared by all agents and equal clock rates.
std::vector<double> cmfa_error_term(const PopulationModel& model, const MixedProfile& y);

/// CSV `t,<label>...` of a one-agent solution.
void write_cmfa_csv(std::ostream& out, const OdeSolution& sol, const StateSpace& states);
/// Long CSV `t,agent,<label>...`, every `thin`-th grid point (the last one always).
void write_nimfa_csv(std::ostream& out, const OdeSolution& sol, const StateSpace& states, std::size_t thin = 1);

}  // namespace popmf
