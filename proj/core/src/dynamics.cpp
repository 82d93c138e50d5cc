#include "popmf/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "popmf/error.hpp"
#include "popmf/random.hpp"

namespace popmf {

StateSpace::StateSpace(std::vector<std::string> labels) : labels_(std::move(labels)) {
  if (labels_.size() < 2) throw ValidationError("state space needs at least two states");
  if (labels_.size() > std::numeric_limits<StateIndex>::max()) throw ValidationError("too many states");
  std::unordered_set<std::string> seen;
  for (const auto& l : labels_) {
    if (l.empty()) throw ValidationError("state labels must be non-empty");
    if (!seen.insert(l).second) throw ValidationError("duplicate state label '" + l + "'");
  }
}

std::optional<std::size_t> StateSpace::find(std::string_view label) const {
  for (std::size_t s = 0; s < labels_.size(); ++s) {
    if (labels_[s] == label) return s;
  }
  return std::nullopt;
}

RatePolicy::RatePolicy(std::size_t n_states, RateRowFn row_fn, double lipschitz_bound, bool homogeneous_agents,
                       std::string name)
    : n_states_(n_states),
      row_fn_(std::move(row_fn)),
      lipschitz_(lipschitz_bound),
      homogeneous_(homogeneous_agents),
      name_(std::move(name)) {
  if (n_states_ < 2) throw ValidationError("rate policy needs at least two states");
  if (!row_fn_) throw ValidationError("rate policy needs a row function");
  if (!(lipschitz_ >= 0.0)) throw ValidationError("Lipschitz bound must be nonnegative");
}

double RatePolicy::rate(std::size_t agent, std::size_t from, std::size_t to, std::span<const double> z) const {
  std::vector<double> out(n_states_);
  row(agent, from, z, out);
  return out[to];
}

Utility coordination_utility() {
  return Utility{[](std::span<const double> x, std::span<double> u) {
                   u[0] = x[0];
                   u[1] = 2.0 * x[1];
                 },
                 2.0, "coordination"};
}

RatePolicy logit_policy(Utility utility, double eta, std::size_t n_states) {
  if (!(eta > 0.0) || !std::isfinite(eta)) throw ValidationError("logit: eta must be positive");
  if (!utility.fn) throw ValidationError("logit: missing utility");
  // The softmax Jacobian has infinity-norm at most 1/2 per row.
  const double lipschitz = utility.lipschitz / (2.0 * eta);
  auto fn = utility.fn;
  const double inv_eta = 1.0 / eta;
  RateRowFn row = [fn, inv_eta](std::size_t, std::size_t, std::span<const double> z, std::span<double> out) {
    fn(z, out);
    const double top = *std::max_element(out.begin(), out.end());
    double total = 0.0;
    for (auto& v : out) {
      v = std::exp((v - top) * inv_eta);
      total += v;
    }
    for (auto& v : out) v /= total;
  };
  return RatePolicy(n_states, std::move(row), lipschitz, true, "logit(" + utility.name + ")");
}

PopulationModel::PopulationModel(StateSpace states, std::vector<double> clock_rates, RatePolicy policy,
                                 InteractionMatrix w)
    : states_(std::move(states)), rates_(std::move(clock_rates)), policy_(std::move(policy)), w_(std::move(w)) {
  if (rates_.empty()) throw ValidationError("model needs at least one agent");
  if (rates_.size() != w_.size()) {
    std::ostringstream msg;
    msg << "clock rates cover " << rates_.size() << " agents but W is " << w_.size() << "x" << w_.size();
    throw ValidationError(msg.str());
  }
  if (policy_.n_states() != states_.size()) throw ValidationError("policy and state space disagree on |S|");
  if (!w_.validated()) throw ValidationError("model requires a validated row-stochastic interaction matrix");
  for (std::size_t i = 0; i < rates_.size(); ++i) {
    if (!(rates_[i] > 0.0) || !std::isfinite(rates_[i])) {
      std::ostringstream msg;
      msg << "clock rate of agent " << i << " must be positive, got " << rates_[i];
      throw ValidationError(msg.str());
    }
    total_rate_ += rates_[i];
    max_rate_ = std::max(max_rate_, rates_[i]);
    if (rates_[i] != rates_[0]) uniform_rates_ = false;
  }
}

PopulationModel sis_model(const SparseRows& a, double b, double gamma) {
  if (!(b > 0.0) || !std::isfinite(b)) throw ValidationError("sis: infection rate b must be positive");
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw ValidationError("sis: recovery rate gamma must be positive");
  const std::size_t n = a.size();
  auto infect = std::make_shared<std::vector<double>>(n);
  auto recover = std::make_shared<std::vector<double>>(n);
  std::vector<double> rates(n);
  double lipschitz = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double row_sum = 0.0;
    for (const auto& e : a[i]) row_sum += e.weight;
    const double d = b * row_sum;
    if (!(d > 0.0)) {
      std::ostringstream msg;
      msg << "sis: agent " << i << " has zero degree";
      throw ValidationError(msg.str());
    }
    rates[i] = d + gamma;
    (*infect)[i] = 1.0 / (1.0 + gamma / d);
    (*recover)[i] = gamma / (d + gamma);
    lipschitz = std::max(lipschitz, (*infect)[i]);
  }
  RateRowFn row = [infect, recover](std::size_t agent, std::size_t from, std::span<const double> z,
                                    std::span<double> out) {
    if (from == 0) {
      out[1] = (*infect)[agent] * z[1];
    } else {
      out[0] = (*recover)[agent];
    }
  };
  // Regular graphs give every agent the same rate function.
  bool shared = true;
  for (std::size_t i = 1; i < n; ++i) {
    shared = shared && (*infect)[i] == (*infect)[0] && (*recover)[i] == (*recover)[0];
  }
  RatePolicy policy(2, std::move(row), lipschitz, shared, "sis");
  return PopulationModel(StateSpace({"S", "I"}), std::move(rates), std::move(policy), row_normalized(a));
}

// ---------------------------------------------------------------------------

PopulationState::PopulationState(std::size_t n_states, std::vector<StateIndex> assignment)
    : assignment_(std::move(assignment)), counts_(n_states, 0) {
  if (n_states < 2) throw ValidationError("population state needs at least two states");
  for (std::size_t i = 0; i < assignment_.size(); ++i) {
    if (assignment_[i] >= n_states) {
      std::ostringstream msg;
      msg << "agent " << i << " has state " << assignment_[i] << " outside [0, " << n_states << ")";
      throw ValidationError(msg.str());
    }
    ++counts_[assignment_[i]];
  }
}

PopulationState PopulationState::uniform(std::size_t n_agents, std::size_t n_states, StateIndex state) {
  return PopulationState(n_states, std::vector<StateIndex>(n_agents, state));
}

void PopulationState::set(std::size_t agent, StateIndex s) {
  --counts_[assignment_[agent]];
  ++counts_[s];
  assignment_[agent] = s;
}

MixedProfile::MixedProfile(std::size_t n_agents, std::size_t n_states)
    : n_agents_(n_agents), n_states_(n_states), values_(n_agents * n_states, 0.0) {}

MixedProfile::MixedProfile(std::size_t n_agents, std::size_t n_states, std::vector<double> values)
    : n_agents_(n_agents), n_states_(n_states), values_(std::move(values)) {
  if (values_.size() != n_agents_ * n_states_) throw ValidationError("mixed profile has the wrong size");
  for (std::size_t i = 0; i < n_agents_; ++i) {
    double sum = 0.0;
    for (double v : agent(i)) {
      if (!(v >= 0.0)) throw ValidationError("mixed profile has a negative entry");
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      std::ostringstream msg;
      msg << "mixed profile of agent " << i << " sums to " << sum;
      throw ValidationError(msg.str());
    }
  }
}

MixedProfile MixedProfile::from_state(const PopulationState& state) {
  MixedProfile y(state.size(), state.n_states());
  for (std::size_t i = 0; i < state.size(); ++i) y.agent(i)[state.state(i)] = 1.0;
  return y;
}

std::vector<double> MixedProfile::average() const {
  std::vector<double> avg(n_states_, 0.0);
  for (std::size_t i = 0; i < n_agents_; ++i) {
    for (std::size_t s = 0; s < n_states_; ++s) avg[s] += values_[i * n_states_ + s];
  }
  for (auto& v : avg) v /= static_cast<double>(n_agents_);
  return avg;
}

void local_estimate(const InteractionMatrix& w, const PopulationState& state, std::size_t agent,
                    std::span<double> out) {
  if (w.homogeneous()) {
    const auto n = static_cast<double>(state.size());
    for (std::size_t s = 0; s < out.size(); ++s) out[s] = static_cast<double>(state.counts()[s]) / n;
    return;
  }
  std::fill(out.begin(), out.end(), 0.0);
  const auto& assignment = state.assignment();
  for (const auto& e : w.row(agent)) out[assignment[e.index]] += e.weight;
}

std::vector<double> local_estimate(const InteractionMatrix& w, const PopulationState& state, std::size_t agent) {
  if (agent >= state.size()) throw ValidationError("local_estimate: agent out of range");
  std::vector<double> out(state.n_states());
  local_estimate(w, state, agent, out);
  return out;
}

std::vector<double> population_average(const PopulationState& state) {
  std::vector<double> avg(state.n_states());
  const auto n = static_cast<double>(state.size());
  for (std::size_t s = 0; s < avg.size(); ++s) avg[s] = static_cast<double>(state.counts()[s]) / n;
  return avg;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<double> sample_simplex(CounterRng& rng, std::size_t k) {
  std::vector<double> z(k);
  double total = 0.0;
  for (auto& v : z) {
    v = rng.exponential(1.0);
    total += v;
  }
  for (auto& v : z) v /= total;
  return z;
}

double inf_distance(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

PolicyReport validate_policy(const PopulationModel& model, std::size_t n_samples, std::uint64_t seed) {
  const auto& policy = model.policy();
  const std::size_t k = model.n_states();
  const std::size_t agents = policy.homogeneous_agents() ? 1 : model.n_agents();
  CounterRng rng(seed);

  // Probe points: simplex vertices, random interior points, and nearby pairs.
  std::vector<std::vector<double>> points;
  for (std::size_t s = 0; s < k; ++s) {
    std::vector<double> e(k, 0.0);
    e[s] = 1.0;
    points.push_back(std::move(e));
  }
  for (std::size_t m = 0; m < n_samples; ++m) points.push_back(sample_simplex(rng, k));
  std::vector<std::pair<std::size_t, std::vector<double>>> near;
  for (std::size_t m = 0; m < points.size(); ++m) {
    const auto other = sample_simplex(rng, k);
    std::vector<double> z(k);
    for (std::size_t s = 0; s < k; ++s) z[s] = (1.0 - 1e-4) * points[m][s] + 1e-4 * other[s];
    near.emplace_back(m, std::move(z));
  }

  PolicyReport report;
  report.min_rate = 1.0;
  std::vector<std::vector<double>> rows(points.size(), std::vector<double>(k));
  std::vector<double> near_row(k);
  const double limit = policy.lipschitz_bound() * (1.0 + 1e-6);
  for (std::size_t i = 0; i < agents; ++i) {
    for (std::size_t from = 0; from < k; ++from) {
      for (std::size_t m = 0; m < points.size(); ++m) {
        policy.row(i, from, points[m], rows[m]);
        double row_sum = 0.0;
        for (std::size_t to = 0; to < k; ++to) {
          if (to == from) continue;
          const double r = rows[m][to];
          report.min_rate = std::min(report.min_rate, r);
          report.max_rate = std::max(report.max_rate, r);
          if (!(r >= 0.0 && r <= 1.0 + 1e-12)) {
            report.violations.push_back({i, from, points[m], r, "rate outside [0, 1]"});
          }
          row_sum += r;
        }
        report.worst_row_sum = std::max(report.worst_row_sum, row_sum);
        if (row_sum > 1.0 + 1e-12) report.violations.push_back({i, from, points[m], row_sum, "row sum exceeds 1"});
      }
      auto check_pair = [&](std::span<const double> a, std::span<const double> ra, std::span<const double> b,
                            std::span<const double> rb) {
        const double dz = inf_distance(a, b);
        if (dz <= 0.0) return;
        const double ratio = inf_distance(ra, rb) / dz;
        report.lipschitz_ratio = std::max(report.lipschitz_ratio, ratio);
        if (ratio > limit) {
          report.violations.push_back({i, from, std::vector<double>(a.begin(), a.end()), ratio,
                                       "Lipschitz ratio exceeds declared bound"});
        }
      };
      for (std::size_t m = 0; m + 1 < points.size(); ++m) check_pair(points[m], rows[m], points[m + 1], rows[m + 1]);
      for (const auto& [m, z] : near) {
        policy.row(i, from, z, near_row);
        check_pair(points[m], rows[m], z, near_row);
      }
    }
  }
  report.ok = report.violations.empty();
  return report;
}

void require_valid_policy(const PopulationModel& model, std::size_t n_samples, std::uint64_t seed) {
  const auto report = validate_policy(model, n_samples, seed);
  if (report.ok) return;
  std::ostringstream msg;
  msg << "policy '" << model.policy().name() << "' failed validation (" << report.violations.size()
      << " violations)";
  for (std::size_t v = 0; v < std::min<std::size_t>(3, report.violations.size()); ++v) {
    const auto& bad = report.violations[v];
    msg << "; agent " << bad.agent << ", from " << model.states().label(bad.from) << ", z=(";
    for (std::size_t s = 0; s < bad.z.size(); ++s) msg << (s ? "," : "") << bad.z[s];
    msg << "): " << bad.what << " (" << bad.value << ")";
  }
  throw ValidationError(msg.str());
}

}  // namespace popmf
