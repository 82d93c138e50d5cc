#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <thread>
#include <vector>

#include "popmf/dynamics.hpp"
#include "popmf/error.hpp"
#include "popmf/random.hpp"

namespace popmf {

/// A realized jump (lazy self-loops are not recorded).
struct Event {
  double time;
  std::uint32_t agent;
  StateIndex from;
  StateIndex to;
};

struct Trajectory {
  PopulationState initial;
  std::vector<Event> events;
  double horizon = 0.0;
  std::uint64_t seed = 0;
};

/// Optional instrumentation for simulate_ct / simulate_dt.
struct SimCounters {
  /// Clock rings (CT) or agent selections (DT), including lazy ones.
  std::uint64_t rings = 0;
  std::uint64_t jumps = 0;
};

/// Exact continuous-time realization on [0, T].
///
/// Clock rings arrive at total rate sum_i r_i; the ringing agent is i with
/// probability r_i / sum r; an agent in state alpha then jumps to beta with
/// probability rho_i^{alpha beta}(Ybar_i(t-)) and stays put otherwise.
/// Deterministic in `seed`. Throws SimulationError if a row of switching
/// probabilities sums above 1 + 1e-9.
Trajectory simulate_ct(const PopulationModel& model, const PopulationState& init, double horizon,
                       std::uint64_t seed, SimCounters* counters = nullptr);

/// Discrete-time chain with step xi: each step, with probability xi * sum r_i
/// one agent (i with probability xi r_i) updates through the same policy.
/// Runs floor(T/xi) steps; events carry times k*xi. Requires xi * sum r_i <= 1.
Trajectory simulate_dt(const PopulationModel& model, const PopulationState& init, double horizon, double xi,
                       std::uint64_t seed, SimCounters* counters = nullptr);

/// Y_av at each grid time (right-continuous), one row of |S| values per point.
/// Grid must be sorted and inside [0, T].
std::vector<std::vector<double>> sample_average(const Trajectory& traj, std::span<const double> grid);

/// Agent states at each grid time, replayed from the event list. Throws if an
/// event's `from` disagrees with the reconstructed state.
std::vector<PopulationState> replay_states(const Trajectory& traj, std::span<const double> grid);

/// Grid 0, step, 2 step, ..., T (last point exactly T).
std::vector<double> uniform_grid(double horizon, double step);

/// Runs fn(k) for k in [0, m) on `threads` workers and returns the results in
/// index order. Output is independent of the thread count. If any call throws,
/// the exception of the smallest failing k is rethrown, wrapped with k.
template <class Fn>
auto run_indexed(std::size_t m, unsigned threads, Fn&& fn) -> std::vector<decltype(fn(std::size_t{}))> {
  using R = decltype(fn(std::size_t{}));
  std::vector<std::optional<R>> slots(m);
  std::atomic<std::size_t> next{0};
  std::mutex failure_mutex;
  std::size_t failed_k = std::numeric_limits<std::size_t>::max();
  std::exception_ptr failure;
  auto worker = [&] {
    for (std::size_t k; (k = next.fetch_add(1)) < m;) {
      try {
        slots[k].emplace(fn(k));
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (k < failed_k) {
          failed_k = k;
          failure = std::current_exception();
        }
      }
    }
  };
  const unsigned n_threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(m == 0 ? 1 : m)));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(n_threads);
    for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }
  if (failure) {
    try {
      std::rethrow_exception(failure);
    } catch (const std::exception& e) {
      std::ostringstream msg;
      msg << "replicate " << failed_k << " failed: " << e.what();
      throw SimulationError(msg.str());
    }
  }
  std::vector<R> out;
  out.reserve(m);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

/// Per-gridpoint ensemble statistics of Y_av.
struct EnsembleStats {
  std::vector<double> grid;
  /// mean[t][alpha]
  std::vector<std::vector<double>> mean;
  /// Unbiased sample variance (0 when m == 1).
  std::vector<std::vector<double>> variance;
  std::size_t m = 0;
  /// Filled by deviation computations; one entry per replicate.
  std::vector<double> sup_deviations;
  /// Sampled averages of every replicate, kept when requested.
  std::vector<std::vector<std::vector<double>>> replicates;

  /// Standard error of the mean at grid point t for state alpha.
  double standard_error(std::size_t t, std::size_t alpha) const;
};

/// Accumulates per-replicate series in a fixed order (Welford).
class EnsembleAccumulator {
 public:
  EnsembleAccumulator(std::vector<double> grid, std::size_t n_states);
  void add(const std::vector<std::vector<double>>& series);
  EnsembleStats finish() const;

 private:
  std::vector<double> grid_;
  std::vector<std::vector<double>> mean_;
  std::vector<std::vector<double>> m2_;
  std::size_t m_ = 0;
};

using InitSampler = std::function<PopulationState(std::size_t k, std::uint64_t seed)>;

/// Seed handed to the InitSampler of a replicate whose dynamics use `replicate_seed`.
constexpr std::uint64_t initial_state_seed(std::uint64_t replicate_seed) noexcept {
  return mix64(replicate_seed ^ 0x696e6974ULL);
}

struct ReplicateOptions {
  unsigned threads = 1;
  bool keep_replicates = false;
};

/// m replicates of simulate_ct; replicate k uses replicate_seed(base_seed, k).
EnsembleStats replicate(const PopulationModel& model, const PopulationState& init, double horizon,
                        std::span<const double> grid, std::size_t m, std::uint64_t base_seed,
                        ReplicateOptions options = {});
/// Same, with a fresh initial state per replicate: init_sampler(k, seed_k).
EnsembleStats replicate(const PopulationModel& model, const InitSampler& init_sampler, double horizon,
                        std::span<const double> grid, std::size_t m, std::uint64_t base_seed,
                        ReplicateOptions options = {});

/// CSV `time,agent,from,to` (state labels).
void write_trajectory_csv(std::ostream& out, const Trajectory& traj, const StateSpace& states);
/// Sidecar CSV `agent,state`.
void write_initial_state_csv(std::ostream& out, const PopulationState& state, const StateSpace& states);
/// CSV `t,mean_<label>...,var_<label>...,m`.
void write_ensemble_csv(std::ostream& out, const EnsembleStats& stats, const StateSpace& states);

}  // namespace popmf
