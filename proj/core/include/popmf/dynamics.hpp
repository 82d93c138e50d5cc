#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "popmf/interaction.hpp"

namespace popmf {

using StateIndex = std::uint16_t;

/// Ordered set of distinct state labels, at least two.
class StateSpace {
 public:
  explicit StateSpace(std::vector<std::string> labels);

  std::size_t size() const noexcept { return labels_.size(); }
  const std::string& label(std::size_t s) const { return labels_.at(s); }
  const std::vector<std::string>& labels() const noexcept { return labels_; }
  std::optional<std::size_t> find(std::string_view label) const;

  friend bool operator==(const StateSpace&, const StateSpace&) = default;

 private:
  std::vector<std::string> labels_;
};

/// Evaluates one row of switching probabilities: writes rho_i^{from,beta}(z)
/// into out[beta] for every beta. out[from] is overwritten with 0 afterwards.
using RateRowFn =
    std::function<void(std::size_t agent, std::size_t from, std::span<const double> z, std::span<double> out)>;

/// The family rho_i^{alpha beta} : simplex -> [0, 1].
///
/// A ring of agent i's clock in state alpha moves it to beta != alpha with
/// probability rho_i^{alpha beta}(local estimate) and leaves it in place
/// otherwise, so every row must satisfy sum_{beta != alpha} rho <= 1.
class RatePolicy {
 public:
  RatePolicy(std::size_t n_states, RateRowFn row_fn, double lipschitz_bound, bool homogeneous_agents,
             std::string name);

  std::size_t n_states() const noexcept { return n_states_; }
  double lipschitz_bound() const noexcept { return lipschitz_; }
  /// All agents share one rate function.
  bool homogeneous_agents() const noexcept { return homogeneous_; }
  const std::string& name() const noexcept { return name_; }

  void row(std::size_t agent, std::size_t from, std::span<const double> z, std::span<double> out) const {
    row_fn_(agent, from, z, out);
    out[from] = 0.0;
  }

  double rate(std::size_t agent, std::size_t from, std::size_t to, std::span<const double> z) const;

 private:
  std::size_t n_states_;
  RateRowFn row_fn_;
  double lipschitz_;
  bool homogeneous_;
  std::string name_;
};

/// Payoff vector U(x) over the simplex. `lipschitz` bounds
/// ||U(x) - U(x')||_inf / ||x - x'||_inf.
struct Utility {
  std::function<void(std::span<const double> x, std::span<double> u)> fn;
  double lipschitz = 0.0;
  std::string name;
};

/// U(x1, x2) = (x1, 2 x2).
Utility coordination_utility();

/// Logit choice: rho^{alpha beta}(x) = exp(U^beta(x)/eta) / sum_gamma exp(U^gamma(x)/eta),
/// independent of alpha. Evaluated with the maximum subtracted.
RatePolicy logit_policy(Utility utility, double eta, std::size_t n_states = 2);

/// Immutable tuple (S, r, rho, W).
class PopulationModel {
 public:
  PopulationModel(StateSpace states, std::vector<double> clock_rates, RatePolicy policy, InteractionMatrix w);

  const StateSpace& states() const noexcept { return states_; }
  std::size_t n_states() const noexcept { return states_.size(); }
  std::size_t n_agents() const noexcept { return rates_.size(); }
  const std::vector<double>& clock_rates() const noexcept { return rates_; }
  double clock_rate(std::size_t i) const { return rates_[i]; }
  double total_rate() const noexcept { return total_rate_; }
  double max_rate() const noexcept { return max_rate_; }
  /// All r_i equal.
  bool uniform_rates() const noexcept { return uniform_rates_; }
  const RatePolicy& policy() const noexcept { return policy_; }
  const InteractionMatrix& interaction() const noexcept { return w_; }

 private:
  StateSpace states_;
  std::vector<double> rates_;
  RatePolicy policy_;
  InteractionMatrix w_;
  double total_rate_ = 0.0;
  double max_rate_ = 0.0;
  bool uniform_rates_ = true;
};

/// Stochastic SIS on weighted adjacency A with infection rate b and recovery
/// rate gamma (states "S", "I"): d_i = b sum_j A_ij, r_i = d_i + gamma,
/// W = A row-normalized, rho_i^{SI}(z) = z^I / (1 + gamma/d_i),
/// rho_i^{IS} = gamma / (d_i + gamma).
///
/// `gamma` here is the recovery rate, unrelated to the ring density parameter.
PopulationModel sis_model(const SparseRows& a, double b, double gamma);

/// Pure-state configuration with per-state occupancy counts.
class PopulationState {
 public:
  PopulationState(std::size_t n_states, std::vector<StateIndex> assignment);
  static PopulationState uniform(std::size_t n_agents, std::size_t n_states, StateIndex state);

  std::size_t size() const noexcept { return assignment_.size(); }
  std::size_t n_states() const noexcept { return counts_.size(); }
  StateIndex state(std::size_t agent) const { return assignment_[agent]; }
  const std::vector<StateIndex>& assignment() const noexcept { return assignment_; }
  const std::vector<std::size_t>& counts() const noexcept { return counts_; }

  void set(std::size_t agent, StateIndex s);

  friend bool operator==(const PopulationState&, const PopulationState&) = default;

 private:
  std::vector<StateIndex> assignment_;
  std::vector<std::size_t> counts_;
};

/// Per-agent points of the simplex, stored agent-major.
class MixedProfile {
 public:
  MixedProfile(std::size_t n_agents, std::size_t n_states);
  MixedProfile(std::size_t n_agents, std::size_t n_states, std::vector<double> values);
  static MixedProfile from_state(const PopulationState& state);

  std::size_t n_agents() const noexcept { return n_agents_; }
  std::size_t n_states() const noexcept { return n_states_; }
  std::span<double> agent(std::size_t i) { return {values_.data() + i * n_states_, n_states_}; }
  std::span<const double> agent(std::size_t i) const { return {values_.data() + i * n_states_, n_states_}; }
  std::vector<double>& values() noexcept { return values_; }
  const std::vector<double>& values() const noexcept { return values_; }

  std::vector<double> average() const;

 private:
  std::size_t n_agents_;
  std::size_t n_states_;
  std::vector<double> values_;
};

/// Ybar_i^alpha = sum_j w_ij Y_j^alpha. O(|S|) for homogeneous W.
void local_estimate(const InteractionMatrix& w, const PopulationState& state, std::size_t agent,
                    std::span<double> out);
std::vector<double> local_estimate(const InteractionMatrix& w, const PopulationState& state, std::size_t agent);

/// Y_av = counts / N.
std::vector<double> population_average(const PopulationState& state);

struct PolicyViolation {
  std::size_t agent = 0;
  std::size_t from = 0;
  std::vector<double> z;
  double value = 0.0;
  std::string what;
};

struct PolicyReport {
  bool ok = true;
  double worst_row_sum = 0.0;
  double min_rate = 0.0;
  double max_rate = 0.0;
  /// Largest observed |rho(z) - rho(z')| / ||z - z'||_inf.
  double lipschitz_ratio = 0.0;
  std::vector<PolicyViolation> violations;
};

/// Samples simplex points and checks 0 <= rho <= 1, sub-stochastic rows and
/// the declared Lipschitz bound (with 1e-6 relative slack). Homogeneous
/// policies are probed for agent 0 only.
PolicyReport validate_policy(const PopulationModel& model, std::size_t n_samples, std::uint64_t seed);

/// Throws ValidationError listing the first violations when the report fails.
void require_valid_policy(const PopulationModel& model, std::size_t n_samples = 64, std::uint64_t seed = 0);

}  // namespace popmf
