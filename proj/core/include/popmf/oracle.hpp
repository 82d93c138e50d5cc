#pragma once

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <span>
#include <vector>

#include "popmf/dynamics.hpp"
#include "popmf/interaction.hpp"
#include "popmf/simulator.hpp"

namespace popmf {

/// Exact CTMC generator over all |S|^N pure configurations.
///
/// Configuration index x = sum_i x_i |S|^i (agent 0 least significant).
/// Off-diagonal rates are stored per row, sorted by column, zeros omitted.
class GeneratorMatrix {
 public:
  static constexpr std::size_t kDefaultCap = 65536;

  GeneratorMatrix(std::size_t n_agents, std::size_t n_states, std::vector<std::size_t> offsets,
                  std::vector<std::uint32_t> columns, std::vector<double> rates);

  std::size_t n_agents() const noexcept { return n_agents_; }
  std::size_t n_states() const noexcept { return n_states_; }
  /// Number of configurations |S|^N.
  std::size_t size() const noexcept { return offsets_.size() - 1; }
  /// Largest total exit rate max_x |Lambda_xx|.
  double uniformization_rate() const noexcept { return uniformization_rate_; }

  double diagonal(std::size_t x) const { return diagonal_[x]; }
  /// Lambda_xy, including the diagonal.
  double entry(std::size_t x, std::size_t y) const;
  std::span<const std::uint32_t> row_columns(std::size_t x) const;
  std::span<const double> row_rates(std::size_t x) const;
  std::size_t off_diagonal_nonzeros() const noexcept { return rates_.size(); }

  std::vector<StateIndex> decode(std::size_t x) const;
  std::size_t encode(std::span<const StateIndex> config) const;
  std::size_t encode(const PopulationState& state) const { return encode(state.assignment()); }

  /// out = p Lambda for a row vector p.
  void apply_left(std::span<const double> p, std::span<double> out) const;

 private:
  std::size_t n_agents_;
  std::size_t n_states_;
  std::vector<std::size_t> offsets_;
  std::vector<std::uint32_t> columns_;
  std::vector<double> rates_;
  std::vector<double> diagonal_;
  double uniformization_rate_ = 0.0;
};

/// |S|^N, or throws ValidationError naming the required size when it exceeds cap.
std::size_t configuration_count(std::size_t n_agents, std::size_t n_states, std::size_t cap);

/// Lambda_xy = r_i rho_i^{alpha beta}(xbar_i) when x and y differ only in agent i (alpha -> beta).
GeneratorMatrix build_generator(const PopulationModel& model, std::size_t cap = GeneratorMatrix::kDefaultCap);

/// SIS generator from its raw description (state 0 = S, 1 = I): infection of
/// i at rate b sum_j A_ij x_j^I, recovery at rate gamma. b, gamma >= 0.
GeneratorMatrix sis_generator_direct(const SparseRows& a, double b, double gamma,
                                     std::size_t cap = GeneratorMatrix::kDefaultCap);

/// max_{x,y} |G1_xy - G2_xy|; throws when the dimensions differ.
double max_abs_difference(const GeneratorMatrix& g1, const GeneratorMatrix& g2);

/// Distribution concentrated on one configuration.
std::vector<double> point_distribution(const GeneratorMatrix& gen, const PopulationState& state);

/// E[Y_av] under a distribution over configurations.
std::vector<double> expected_average(const GeneratorMatrix& gen, std::span<const double> dist);

/// Exact E[Y_av(t)] for each grid time via uniformization
/// p(t) = sum_k Pois(k; Lbar t) p(0) (I + Lambda/Lbar)^k, truncated once the
/// remaining Poisson mass is below 1e-12. Long intervals are split so that
/// Lbar dt <= 32 per piece.
std::vector<std::vector<double>> exact_marginals(const GeneratorMatrix& gen, std::span<const double> init_dist,
                                                 std::span<const double> grid);

/// Exact E[Y_av] of the step-xi chain after floor(T/xi) steps, whose
/// transition matrix is I + xi Lambda. Requires xi * Lbar <= 1.
std::vector<double> exact_dt_marginal(const GeneratorMatrix& gen, std::span<const double> init_dist, double xi,
                                      double horizon);

/// M_v(t) = Y_v(t) - Y_v(0) - int_0^t Phi_v(Y(s)) ds with Y_v = sum_i v_i Y_i
/// and Phi_v = sum_i v_i Phi_i, the NIMFA field evaluated at the pure
/// configuration. The integrand is piecewise constant, so the integral is an
/// exact sum over inter-event intervals. Returns one |S|-vector per grid point.
std::vector<std::vector<double>> martingale_residual(const Trajectory& traj, const PopulationModel& model,
                                                     std::span<const double> v, std::span<const double> grid);

/// Pointwise sup-norm differences of two aligned series.
std::vector<double> pointwise_deviation(const std::vector<std::vector<double>>& a,
                                        const std::vector<std::vector<double>>& b);
/// max over the grid of pointwise_deviation.
double deviation_stat(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b);

struct DeviationRecord {
  std::vector<double> grid;
  std::vector<double> cmfa;
  std::vector<double> nimfa;
  double sup_dev_cmfa = 0.0;
  double sup_dev_nimfa = 0.0;
};

/// Builds a record; either reference may be empty (its sup is then NaN).
DeviationRecord make_deviation_record(std::span<const double> grid, const std::vector<std::vector<double>>& sample,
                                      const std::vector<std::vector<double>>* cmfa,
                                      const std::vector<std::vector<double>>* nimfa);

/// `row,col,rate` triplets, diagonal included.
void write_generator_csv(std::ostream& out, const GeneratorMatrix& gen);
/// `index,config`, config spelled with state labels, agent 0 first. Labels are
/// concatenated when all are one character long and joined by '|' otherwise.
void write_generator_index_csv(std::ostream& out, const GeneratorMatrix& gen, const StateSpace& states);

}  // namespace popmf
