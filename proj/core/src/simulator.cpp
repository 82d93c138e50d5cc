#include "popmf/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "popmf/csv.hpp"
#include "popmf/random.hpp"

namespace popmf {

namespace {

/// Picks agent i with probability r_i / sum r from u in [0, sum r).
class AgentPicker {
 public:
  explicit AgentPicker(const PopulationModel& model) : uniform_(model.uniform_rates()), n_(model.n_agents()) {
    if (!uniform_) {
      cumulative_.resize(n_);
      std::partial_sum(model.clock_rates().begin(), model.clock_rates().end(), cumulative_.begin());
    }
  }

  /// `scaled` is uniform on [0, total rate).
  std::size_t pick(double scaled, double total) const {
    if (uniform_) {
      const auto i = static_cast<std::size_t>(scaled / total * static_cast<double>(n_));
      return std::min(i, n_ - 1);
    }
    const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), scaled);
    return std::min(static_cast<std::size_t>(it - cumulative_.begin()), n_ - 1);
  }

 private:
  bool uniform_;
  std::size_t n_;
  std::vector<double> cumulative_;
};

void check_init(const PopulationModel& model, const PopulationState& init) {
  if (init.size() != model.n_agents() || init.n_states() != model.n_states()) {
    std::ostringstream msg;
    msg << "initial state has " << init.size() << " agents over " << init.n_states() << " states; model has "
        << model.n_agents() << " agents over " << model.n_states() << " states";
    throw ValidationError(msg.str());
  }
}

/// Applies one update of agent i at time t. Returns the new state (== old when lazy).
StateIndex update_agent(const PopulationModel& model, const PopulationState& state, std::size_t i, double u,
                        double t, std::span<double> zbar, std::span<double> rates) {
  const auto from = state.state(i);
  local_estimate(model.interaction(), state, i, zbar);
  model.policy().row(i, from, zbar, rates);
  double total = 0.0;
  for (double r : rates) total += r;
  if (total > 1.0 + 1e-9) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "switching probabilities of agent " << i << " in state " << model.states().label(from) << " sum to "
        << total << " at t=" << t;
    throw SimulationError(msg.str());
  }
  double cumulative = 0.0;
  for (std::size_t beta = 0; beta < rates.size(); ++beta) {
    if (beta == from) continue;
    cumulative += rates[beta];
    if (u < cumulative) return static_cast<StateIndex>(beta);
  }
  return from;
}

}  // namespace

Trajectory simulate_ct(const PopulationModel& model, const PopulationState& init, double horizon,
                       std::uint64_t seed, SimCounters* counters) {
  check_init(model, init);
  if (!(horizon >= 0.0) || !std::isfinite(horizon)) throw ValidationError("horizon must be finite and >= 0");
  Trajectory traj{init, {}, horizon, seed};
  PopulationState state = init;
  CounterRng rng(seed);
  const AgentPicker picker(model);
  const double total = model.total_rate();
  std::vector<double> zbar(model.n_states()), rates(model.n_states());
  double t = 0.0;
  while (true) {
    t += rng.exponential(total);
    if (t > horizon) break;
    const std::size_t i = picker.pick(rng.uniform() * total, total);
    const auto from = state.state(i);
    const auto to = update_agent(model, state, i, rng.uniform(), t, zbar, rates);
    if (counters) ++counters->rings;
    if (to != from) {
      state.set(i, to);
      traj.events.push_back({t, static_cast<std::uint32_t>(i), from, to});
      if (counters) ++counters->jumps;
    }
  }
  return traj;
}

Trajectory simulate_dt(const PopulationModel& model, const PopulationState& init, double horizon, double xi,
                       std::uint64_t seed, SimCounters* counters) {
  check_init(model, init);
  if (!(horizon >= 0.0) || !std::isfinite(horizon)) throw ValidationError("horizon must be finite and >= 0");
  if (!(xi > 0.0)) throw ValidationError("simulate_dt: xi must be positive");
  const double total = model.total_rate();
  const double p_update = xi * total;
  if (p_update > 1.0 + 1e-12) {
    std::ostringstream msg;
    msg << "simulate_dt: xi * sum r_i = " << p_update << " exceeds 1";
    throw ValidationError(msg.str());
  }
  Trajectory traj{init, {}, horizon, seed};
  PopulationState state = init;
  CounterRng rng(seed);
  const AgentPicker picker(model);
  std::vector<double> zbar(model.n_states()), rates(model.n_states());
  const auto steps = static_cast<std::uint64_t>(std::floor(horizon / xi + 1e-9));
  for (std::uint64_t k = 1; k <= steps; ++k) {
    const double u = rng.uniform();
    if (u >= p_update) continue;
    // u / xi is uniform on [0, sum r): agent i is chosen with probability xi r_i.
    const std::size_t i = picker.pick(u / xi, total);
    const double t = static_cast<double>(k) * xi;
    const auto from = state.state(i);
    const auto to = update_agent(model, state, i, rng.uniform(), t, zbar, rates);
    if (counters) ++counters->rings;
    if (to != from) {
      state.set(i, to);
      traj.events.push_back({t, static_cast<std::uint32_t>(i), from, to});
      if (counters) ++counters->jumps;
    }
  }
  return traj;
}

namespace {

void check_grid(std::span<const double> grid, double horizon) {
  for (std::size_t k = 0; k < grid.size(); ++k) {
    if (grid[k] < 0.0 || grid[k] > horizon * (1.0 + 1e-12) + 1e-15) {
      throw ValidationError("grid point " + format_double(grid[k]) + " lies outside [0, T]");
    }
    if (k > 0 && grid[k] < grid[k - 1]) throw ValidationError("grid must be sorted");
  }
}

}  // namespace

std::vector<std::vector<double>> sample_average(const Trajectory& traj, std::span<const double> grid) {
  check_grid(grid, traj.horizon);
  const std::size_t k = traj.initial.n_states();
  std::vector<std::size_t> counts = traj.initial.counts();
  const auto n = static_cast<double>(traj.initial.size());
  std::vector<std::vector<double>> out;
  out.reserve(grid.size());
  std::size_t e = 0;
  for (double t : grid) {
    while (e < traj.events.size() && traj.events[e].time <= t) {
      --counts[traj.events[e].from];
      ++counts[traj.events[e].to];
      ++e;
    }
    std::vector<double> row(k);
    for (std::size_t s = 0; s < k; ++s) row[s] = static_cast<double>(counts[s]) / n;
    out.push_back(std::move(row));
  }
  return out;
}

std::vector<PopulationState> replay_states(const Trajectory& traj, std::span<const double> grid) {
  check_grid(grid, traj.horizon);
  PopulationState state = traj.initial;
  std::vector<PopulationState> out;
  std::size_t e = 0;
  double last = -1.0;
  for (double t : grid) {
    while (e < traj.events.size() && traj.events[e].time <= t) {
      const auto& ev = traj.events[e];
      if (ev.time <= last) throw SimulationError("event times are not strictly increasing");
      if (ev.agent >= state.size() || state.state(ev.agent) != ev.from) {
        std::ostringstream msg;
        msg << "event " << e << " at t=" << ev.time << " moves agent " << ev.agent << " from state " << ev.from
            << " but the replayed state differs";
        throw SimulationError(msg.str());
      }
      state.set(ev.agent, ev.to);
      last = ev.time;
      ++e;
    }
    out.push_back(state);
  }
  return out;
}

std::vector<double> uniform_grid(double horizon, double step) {
  if (!(horizon >= 0.0) || !(step > 0.0)) throw ValidationError("uniform_grid: need T >= 0 and step > 0");
  const double ratio = horizon / step;
  auto k = static_cast<std::size_t>(std::llround(ratio));
  if (std::abs(ratio - static_cast<double>(k)) > 1e-9 * std::max(1.0, ratio)) {
    k = static_cast<std::size_t>(std::ceil(ratio));
  }
  std::vector<double> grid(k + 1);
  for (std::size_t i = 0; i < k; ++i) grid[i] = static_cast<double>(i) * step;
  grid[k] = horizon;
  return grid;
}

// ---------------------------------------------------------------------------

double EnsembleStats::standard_error(std::size_t t, std::size_t alpha) const {
  return m == 0 ? 0.0 : std::sqrt(variance[t][alpha] / static_cast<double>(m));
}

EnsembleAccumulator::EnsembleAccumulator(std::vector<double> grid, std::size_t n_states)
    : grid_(std::move(grid)),
      mean_(grid_.size(), std::vector<double>(n_states, 0.0)),
      m2_(grid_.size(), std::vector<double>(n_states, 0.0)) {}

void EnsembleAccumulator::add(const std::vector<std::vector<double>>& series) {
  if (series.size() != grid_.size()) throw ValidationError("series length does not match the grid");
  ++m_;
  const auto m = static_cast<double>(m_);
  for (std::size_t t = 0; t < grid_.size(); ++t) {
    for (std::size_t s = 0; s < mean_[t].size(); ++s) {
      const double x = series[t][s];
      const double delta = x - mean_[t][s];
      mean_[t][s] += delta / m;
      m2_[t][s] += delta * (x - mean_[t][s]);
    }
  }
}

EnsembleStats EnsembleAccumulator::finish() const {
  EnsembleStats stats;
  stats.grid = grid_;
  stats.mean = mean_;
  stats.m = m_;
  stats.variance = m2_;
  for (auto& row : stats.variance) {
    for (auto& v : row) v = m_ > 1 ? std::max(0.0, v / static_cast<double>(m_ - 1)) : 0.0;
  }
  return stats;
}

EnsembleStats replicate(const PopulationModel& model, const PopulationState& init, double horizon,
                        std::span<const double> grid, std::size_t m, std::uint64_t base_seed,
                        ReplicateOptions options) {
  return replicate(model, [&init](std::size_t, std::uint64_t) { return init; }, horizon, grid, m, base_seed,
                   options);
}

EnsembleStats replicate(const PopulationModel& model, const InitSampler& init_sampler, double horizon,
                        std::span<const double> grid, std::size_t m, std::uint64_t base_seed,
                        ReplicateOptions options) {
  if (m == 0) throw ValidationError("replicate: need at least one replicate");
  check_grid(grid, horizon);
  auto series = run_indexed(m, options.threads, [&](std::size_t k) {
    const auto seed = replicate_seed(base_seed, k);
    const auto init = init_sampler(k, initial_state_seed(seed));
    return sample_average(simulate_ct(model, init, horizon, seed), grid);
  });
  EnsembleAccumulator acc(std::vector<double>(grid.begin(), grid.end()), model.n_states());
  for (const auto& s : series) acc.add(s);
  auto stats = acc.finish();
  if (options.keep_replicates) stats.replicates = std::move(series);
  return stats;
}

void write_trajectory_csv(std::ostream& out, const Trajectory& traj, const StateSpace& states) {
  CsvWriter csv(out);
  csv.field("time").field("agent").field("from").field("to").end_row();
  for (const auto& e : traj.events) {
    csv.field(e.time).field(static_cast<std::size_t>(e.agent)).field(states.label(e.from)).field(
        states.label(e.to));
    csv.end_row();
  }
}

void write_initial_state_csv(std::ostream& out, const PopulationState& state, const StateSpace& states) {
  CsvWriter csv(out);
  csv.field("agent").field("state").end_row();
  for (std::size_t i = 0; i < state.size(); ++i) {
    csv.field(i).field(states.label(state.state(i)));
    csv.end_row();
  }
}

void write_ensemble_csv(std::ostream& out, const EnsembleStats& stats, const StateSpace& states) {
  CsvWriter csv(out);
  csv.field("t");
  for (const auto& l : states.labels()) csv.field("mean_" + l);
  for (const auto& l : states.labels()) csv.field("var_" + l);
  csv.field("m").end_row();
  for (std::size_t t = 0; t < stats.grid.size(); ++t) {
    csv.field(stats.grid[t]);
    for (double v : stats.mean[t]) csv.field(v);
    for (double v : stats.variance[t]) csv.field(v);
    csv.field(stats.m).end_row();
  }
}

}  // namespace popmf
