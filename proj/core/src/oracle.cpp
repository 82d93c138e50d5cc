#include "popmf/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <utility>

#include "popmf/csv.hpp"
#include "popmf/error.hpp"

namespace popmf {

GeneratorMatrix::GeneratorMatrix(std::size_t n_agents, std::size_t n_states, std::vector<std::size_t> offsets,
                                 std::vector<std::uint32_t> columns, std::vector<double> rates)
    : n_agents_(n_agents),
      n_states_(n_states),
      offsets_(std::move(offsets)),
      columns_(std::move(columns)),
      rates_(std::move(rates)) {
  const std::size_t n = size();
  diagonal_.assign(n, 0.0);
  for (std::size_t x = 0; x < n; ++x) {
    double out = 0.0;
    for (std::size_t e = offsets_[x]; e < offsets_[x + 1]; ++e) {
      if (rates_[e] < 0.0) throw ValidationError("generator has a negative off-diagonal rate");
      out += rates_[e];
    }
    diagonal_[x] = -out;
    uniformization_rate_ = std::max(uniformization_rate_, out);
  }
}

double GeneratorMatrix::entry(std::size_t x, std::size_t y) const {
  if (x == y) return diagonal_[x];
  const auto cols = row_columns(x);
  const auto it = std::lower_bound(cols.begin(), cols.end(), static_cast<std::uint32_t>(y));
  if (it == cols.end() || *it != y) return 0.0;
  return rates_[offsets_[x] + static_cast<std::size_t>(it - cols.begin())];
}

std::span<const std::uint32_t> GeneratorMatrix::row_columns(std::size_t x) const {
  return {columns_.data() + offsets_[x], offsets_[x + 1] - offsets_[x]};
}

std::span<const double> GeneratorMatrix::row_rates(std::size_t x) const {
  return {rates_.data() + offsets_[x], offsets_[x + 1] - offsets_[x]};
}

std::vector<StateIndex> GeneratorMatrix::decode(std::size_t x) const {
  std::vector<StateIndex> config(n_agents_);
  for (std::size_t i = 0; i < n_agents_; ++i) {
    config[i] = static_cast<StateIndex>(x % n_states_);
    x /= n_states_;
  }
  return config;
}

std::size_t GeneratorMatrix::encode(std::span<const StateIndex> config) const {
  if (config.size() != n_agents_) throw ValidationError("configuration has the wrong number of agents");
  std::size_t x = 0;
  for (std::size_t i = n_agents_; i-- > 0;) x = x * n_states_ + config[i];
  return x;
}

void GeneratorMatrix::apply_left(std::span<const double> p, std::span<double> out) const {
  const std::size_t n = size();
  for (std::size_t x = 0; x < n; ++x) out[x] = p[x] * diagonal_[x];
  for (std::size_t x = 0; x < n; ++x) {
    if (p[x] == 0.0) continue;
    for (std::size_t e = offsets_[x]; e < offsets_[x + 1]; ++e) out[columns_[e]] += p[x] * rates_[e];
  }
}

std::size_t configuration_count(std::size_t n_agents, std::size_t n_states, std::size_t cap) {
  long double count = 1.0L;
  for (std::size_t i = 0; i < n_agents; ++i) count *= static_cast<long double>(n_states);
  if (count > static_cast<long double>(cap)) {
    std::ostringstream msg;
    msg << "state space |S|^N = " << n_states << "^" << n_agents << " = " << static_cast<double>(count)
        << " exceeds the cap of " << cap;
    throw ValidationError(msg.str());
  }
  return static_cast<std::size_t>(count);
}

namespace {

/// Assembles a generator from a callback listing (target, rate) for each x.
template <class RowFn>
GeneratorMatrix assemble(std::size_t n_agents, std::size_t n_states, std::size_t count, RowFn&& fill_row) {
  std::vector<std::size_t> offsets{0};
  offsets.reserve(count + 1);
  std::vector<std::uint32_t> columns;
  std::vector<double> rates;
  std::vector<std::pair<std::uint32_t, double>> row;
  for (std::size_t x = 0; x < count; ++x) {
    row.clear();
    fill_row(x, row);
    std::sort(row.begin(), row.end());
    for (const auto& [y, rate] : row) {
      if (rate == 0.0) continue;
      columns.push_back(y);
      rates.push_back(rate);
    }
    offsets.push_back(columns.size());
  }
  return GeneratorMatrix(n_agents, n_states, std::move(offsets), std::move(columns), std::move(rates));
}

std::vector<std::size_t> radix_powers(std::size_t n_agents, std::size_t n_states) {
  std::vector<std::size_t> pow(n_agents);
  std::size_t p = 1;
  for (std::size_t i = 0; i < n_agents; ++i) {
    pow[i] = p;
    p *= n_states;
  }
  return pow;
}

}  // namespace

GeneratorMatrix build_generator(const PopulationModel& model, std::size_t cap) {
  const std::size_t n = model.n_agents();
  const std::size_t k = model.n_states();
  const std::size_t count = configuration_count(n, k, cap);
  const auto pow = radix_powers(n, k);
  std::vector<double> zbar(k), rates(k);
  return assemble(n, k, count, [&](std::size_t x, auto& row) {
    std::vector<StateIndex> config(n);
    std::size_t rest = x;
    for (std::size_t i = 0; i < n; ++i) {
      config[i] = static_cast<StateIndex>(rest % k);
      rest /= k;
    }
    const PopulationState state(k, std::move(config));
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t alpha = state.state(i);
      local_estimate(model.interaction(), state, i, zbar);
      std::fill(rates.begin(), rates.end(), 0.0);
      model.policy().row(i, alpha, zbar, rates);
      for (std::size_t beta = 0; beta < k; ++beta) {
        if (beta == alpha) continue;
        const std::size_t y = x - alpha * pow[i] + beta * pow[i];
        row.emplace_back(static_cast<std::uint32_t>(y), model.clock_rate(i) * rates[beta]);
      }
    }
  });
}

GeneratorMatrix sis_generator_direct(const SparseRows& a, double b, double gamma, std::size_t cap) {
  if (!(b >= 0.0) || !(gamma >= 0.0)) throw ValidationError("sis generator: b and gamma must be nonnegative");
  const std::size_t n = a.size();
  const std::size_t count = configuration_count(n, 2, cap);
  const auto pow = radix_powers(n, 2);
  return assemble(n, 2, count, [&](std::size_t x, auto& row) {
    for (std::size_t i = 0; i < n; ++i) {
      const bool infected = (x >> i) & 1U;
      if (infected) {
        row.emplace_back(static_cast<std::uint32_t>(x - pow[i]), gamma);
      } else {
        double pressure = 0.0;
        for (const auto& e : a[i]) {
          if ((x >> e.index) & 1U) pressure += e.weight;
        }
        row.emplace_back(static_cast<std::uint32_t>(x + pow[i]), b * pressure);
      }
    }
  });
}

double max_abs_difference(const GeneratorMatrix& g1, const GeneratorMatrix& g2) {
  if (g1.size() != g2.size() || g1.n_agents() != g2.n_agents()) {
    throw ValidationError("generators have different dimensions");
  }
  double worst = 0.0;
  for (std::size_t x = 0; x < g1.size(); ++x) {
    worst = std::max(worst, std::abs(g1.diagonal(x) - g2.diagonal(x)));
    const auto c1 = g1.row_columns(x), c2 = g2.row_columns(x);
    const auto r1 = g1.row_rates(x), r2 = g2.row_rates(x);
    std::size_t p = 0, q = 0;
    while (p < c1.size() || q < c2.size()) {
      if (q == c2.size() || (p < c1.size() && c1[p] < c2[q])) {
        worst = std::max(worst, std::abs(r1[p++]));
      } else if (p == c1.size() || c2[q] < c1[p]) {
        worst = std::max(worst, std::abs(r2[q++]));
      } else {
        worst = std::max(worst, std::abs(r1[p++] - r2[q++]));
      }
    }
  }
  return worst;
}

std::vector<double> point_distribution(const GeneratorMatrix& gen, const PopulationState& state) {
  std::vector<double> p(gen.size(), 0.0);
  p[gen.encode(state)] = 1.0;
  return p;
}

std::vector<double> expected_average(const GeneratorMatrix& gen, std::span<const double> dist) {
  const std::size_t k = gen.n_states();
  std::vector<double> avg(k, 0.0);
  for (std::size_t x = 0; x < gen.size(); ++x) {
    if (dist[x] == 0.0) continue;
    std::size_t rest = x;
    for (std::size_t i = 0; i < gen.n_agents(); ++i) {
      avg[rest % k] += dist[x];
      rest /= k;
    }
  }
  for (auto& v : avg) v /= static_cast<double>(gen.n_agents());
  return avg;
}

namespace {

void check_distribution(const GeneratorMatrix& gen, std::span<const double> dist) {
  if (dist.size() != gen.size()) throw ValidationError("initial distribution has the wrong length");
  double total = 0.0;
  for (double p : dist) {
    if (!(p >= 0.0)) throw ValidationError("initial distribution has a negative entry");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ValidationError("initial distribution does not sum to 1");
}

/// p <- p exp(Lambda dt) by uniformization, for Lbar dt moderate.
void uniformization_step(const GeneratorMatrix& gen, std::vector<double>& p, double dt) {
  const double lbar = gen.uniformization_rate();
  const double a = lbar * dt;
  if (a <= 0.0) return;
  const std::size_t n = p.size();
  std::vector<double> term = p, next(n), result(n);
  double weight = std::exp(-a);
  double mass = weight;
  for (std::size_t x = 0; x < n; ++x) result[x] = weight * term[x];
  const double log_a = std::log(a);
  const auto k_max = static_cast<std::size_t>(a + 40.0 * std::sqrt(a) + 100.0);
  for (std::size_t k = 1; k <= k_max && 1.0 - mass >= 1e-12; ++k) {
    // term <- term (I + Lambda / lbar)
    gen.apply_left(term, next);
    for (std::size_t x = 0; x < n; ++x) term[x] += next[x] / lbar;
    weight = std::exp(-a + static_cast<double>(k) * log_a - std::lgamma(static_cast<double>(k) + 1.0));
    mass += weight;
    for (std::size_t x = 0; x < n; ++x) result[x] += weight * term[x];
  }
  p.swap(result);
}

}  // namespace

std::vector<std::vector<double>> exact_marginals(const GeneratorMatrix& gen, std::span<const double> init_dist,
                                                 std::span<const double> grid) {
  check_distribution(gen, init_dist);
  std::vector<double> p(init_dist.begin(), init_dist.end());
  std::vector<std::vector<double>> out;
  out.reserve(grid.size());
  double now = 0.0;
  constexpr double kMaxPiece = 32.0;
  for (double t : grid) {
    if (t < now) throw ValidationError("exact_marginals: grid must be sorted and nonnegative");
    double remaining = t - now;
    const double lbar = gen.uniformization_rate();
    if (lbar > 0.0) {
      const auto pieces = static_cast<std::size_t>(std::ceil(lbar * remaining / kMaxPiece));
      for (std::size_t s = 0; s < pieces; ++s) {
        const double dt = remaining / static_cast<double>(pieces - s);
        uniformization_step(gen, p, dt);
        remaining -= dt;
      }
    }
    now = t;
    out.push_back(expected_average(gen, p));
  }
  return out;
}

std::vector<double> exact_dt_marginal(const GeneratorMatrix& gen, std::span<const double> init_dist, double xi,
                                      double horizon) {
  check_distribution(gen, init_dist);
  if (!(xi > 0.0)) throw ValidationError("exact_dt_marginal: xi must be positive");
  if (xi * gen.uniformization_rate() > 1.0 + 1e-12) {
    throw ValidationError("exact_dt_marginal: xi times the largest exit rate exceeds 1");
  }
  const auto steps = static_cast<std::size_t>(std::floor(horizon / xi + 1e-9));
  std::vector<double> p(init_dist.begin(), init_dist.end()), delta(p.size());
  for (std::size_t s = 0; s < steps; ++s) {
    gen.apply_left(p, delta);
    for (std::size_t x = 0; x < p.size(); ++x) p[x] += xi * delta[x];
  }
  return expected_average(gen, p);
}

// ---------------------------------------------------------------------------

namespace {

/// Tracks Phi_v(Y) = sum_i v_i Phi_i(Y) for a pure configuration under jumps.
class DriftTracker {
 public:
  DriftTracker(const PopulationModel& model, std::span<const double> v, const PopulationState& state)
      : model_(model), v_(v.begin(), v.end()), state_(state), k_(model.n_states()), total_(k_, 0.0) {
    const auto& w = model.interaction();
    fast_ = w.homogeneous() && model.policy().homogeneous_agents();
    buf_.resize(k_);
    if (fast_) {
      weight_by_state_.assign(k_, 0.0);
      for (std::size_t i = 0; i < v_.size(); ++i) weight_by_state_[state_.state(i)] += v_[i] * model.clock_rate(i);
      recompute_fast();
      return;
    }
    if (!w.homogeneous()) {
      ybar_.assign(v_.size() * k_, 0.0);
      for (std::size_t i = 0; i < v_.size(); ++i) {
        for (const auto& e : w.row(i)) ybar_[i * k_ + state_.state(e.index)] += e.weight;
      }
    }
    contrib_.assign(v_.size() * k_, 0.0);
    for (std::size_t i = 0; i < v_.size(); ++i) refresh(i);
  }

  const std::vector<double>& total() const noexcept { return total_; }

  void jump(std::size_t j, StateIndex from, StateIndex to) {
    state_.set(j, to);
    if (fast_) {
      const double wj = v_[j] * model_.clock_rate(j);
      weight_by_state_[from] -= wj;
      weight_by_state_[to] += wj;
      recompute_fast();
      return;
    }
    const auto& w = model_.interaction();
    if (w.homogeneous()) {
      for (std::size_t i = 0; i < v_.size(); ++i) refresh(i);
      return;
    }
    for (const auto& e : w.column(j)) {
      ybar_[e.index * k_ + from] -= e.weight;
      ybar_[e.index * k_ + to] += e.weight;
      refresh(e.index);
    }
    refresh(j);
  }

 private:
  void recompute_fast() {
    const auto avg = population_average(state_);
    std::fill(total_.begin(), total_.end(), 0.0);
    for (std::size_t g = 0; g < k_; ++g) {
      if (weight_by_state_[g] == 0.0) continue;
      std::fill(buf_.begin(), buf_.end(), 0.0);
      model_.policy().row(0, g, avg, buf_);
      double out = 0.0;
      for (std::size_t b = 0; b < k_; ++b) {
        total_[b] += weight_by_state_[g] * buf_[b];
        out += buf_[b];
      }
      total_[g] -= weight_by_state_[g] * out;
    }
  }

  void refresh(std::size_t i) {
    double* c = contrib_.data() + i * k_;
    for (std::size_t s = 0; s < k_; ++s) total_[s] -= c[s];
    if (v_[i] == 0.0) {
      std::fill(c, c + k_, 0.0);
      return;
    }
    auto& z = z_;
    if (model_.interaction().homogeneous()) {
      z = population_average(state_);
    } else {
      z.assign(ybar_.data() + i * k_, ybar_.data() + (i + 1) * k_);
    }
    const std::size_t g = state_.state(i);
    std::fill(buf_.begin(), buf_.end(), 0.0);
    model_.policy().row(i, g, z, buf_);
    const double scale = v_[i] * model_.clock_rate(i);
    double out = 0.0;
    for (std::size_t b = 0; b < k_; ++b) {
      c[b] = scale * buf_[b];
      out += buf_[b];
    }
    c[g] = -scale * out;
    for (std::size_t s = 0; s < k_; ++s) total_[s] += c[s];
  }

  const PopulationModel& model_;
  std::vector<double> v_;
  PopulationState state_;
  std::size_t k_;
  bool fast_ = false;
  std::vector<double> total_;
  std::vector<double> buf_;
  std::vector<double> z_;
  std::vector<double> weight_by_state_;
  std::vector<double> ybar_;
  std::vector<double> contrib_;
};

}  // namespace

std::vector<std::vector<double>> martingale_residual(const Trajectory& traj, const PopulationModel& model,
                                                     std::span<const double> v, std::span<const double> grid) {
  const std::size_t n = model.n_agents();
  const std::size_t k = model.n_states();
  if (traj.initial.size() != n || v.size() != n) throw ValidationError("martingale_residual: dimension mismatch");
  double v_norm = 0.0;
  for (double vi : v) {
    if (!(vi >= 0.0)) throw ValidationError("martingale_residual: weights must be nonnegative");
    v_norm += vi;
  }
  if (v_norm > 1.0 + 1e-12) throw ValidationError("martingale_residual: weights must have l1 norm at most 1");

  DriftTracker drift(model, v, traj.initial);
  std::vector<double> jump_part(k, 0.0), integral(k, 0.0);
  std::vector<std::vector<double>> out;
  out.reserve(grid.size());
  double last = 0.0;
  std::size_t e = 0;
  auto advance_to = [&](double t) {
    const auto& phi = drift.total();
    for (std::size_t s = 0; s < k; ++s) integral[s] += phi[s] * (t - last);
    last = t;
  };
  for (double t : grid) {
    if (t < last || t > traj.horizon * (1.0 + 1e-12)) {
      throw ValidationError("martingale_residual: grid must be sorted within [0, T]");
    }
    while (e < traj.events.size() && traj.events[e].time <= t) {
      const auto& ev = traj.events[e];
      advance_to(ev.time);
      jump_part[ev.from] -= v[ev.agent];
      jump_part[ev.to] += v[ev.agent];
      drift.jump(ev.agent, ev.from, ev.to);
      ++e;
    }
    advance_to(t);
    std::vector<double> m(k);
    for (std::size_t s = 0; s < k; ++s) m[s] = jump_part[s] - integral[s];
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<double> pointwise_deviation(const std::vector<std::vector<double>>& a,
                                        const std::vector<std::vector<double>>& b) {
  if (a.size() != b.size()) {
    std::ostringstream msg;
    msg << "series have different lengths (" << a.size() << " vs " << b.size() << ")";
    throw ValidationError(msg.str());
  }
  std::vector<double> out(a.size(), 0.0);
  for (std::size_t t = 0; t < a.size(); ++t) {
    if (a[t].size() != b[t].size()) throw ValidationError("series have different state dimensions");
    for (std::size_t s = 0; s < a[t].size(); ++s) out[t] = std::max(out[t], std::abs(a[t][s] - b[t][s]));
  }
  return out;
}

double deviation_stat(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b) {
  const auto dev = pointwise_deviation(a, b);
  return dev.empty() ? 0.0 : *std::max_element(dev.begin(), dev.end());
}

DeviationRecord make_deviation_record(std::span<const double> grid, const std::vector<std::vector<double>>& sample,
                                      const std::vector<std::vector<double>>* cmfa,
                                      const std::vector<std::vector<double>>* nimfa) {
  DeviationRecord rec;
  rec.grid.assign(grid.begin(), grid.end());
  const double nan = std::numeric_limits<double>::quiet_NaN();
  rec.sup_dev_cmfa = nan;
  rec.sup_dev_nimfa = nan;
  if (cmfa) {
    rec.cmfa = pointwise_deviation(sample, *cmfa);
    rec.sup_dev_cmfa = rec.cmfa.empty() ? 0.0 : *std::max_element(rec.cmfa.begin(), rec.cmfa.end());
  }
  if (nimfa) {
    rec.nimfa = pointwise_deviation(sample, *nimfa);
    rec.sup_dev_nimfa = rec.nimfa.empty() ? 0.0 : *std::max_element(rec.nimfa.begin(), rec.nimfa.end());
  }
  return rec;
}

void write_generator_csv(std::ostream& out, const GeneratorMatrix& gen) {
  CsvWriter csv(out);
  csv.field("row").field("col").field("rate").end_row();
  for (std::size_t x = 0; x < gen.size(); ++x) {
    const auto cols = gen.row_columns(x);
    const auto rates = gen.row_rates(x);
    bool diagonal_written = false;
    auto write_diagonal = [&] {
      if (!diagonal_written && gen.diagonal(x) != 0.0) csv.field(x).field(x).field(gen.diagonal(x)).end_row();
      diagonal_written = true;
    };
    for (std::size_t e = 0; e < cols.size(); ++e) {
      if (cols[e] > x) write_diagonal();
      csv.field(x).field(static_cast<std::size_t>(cols[e])).field(rates[e]).end_row();
    }
    write_diagonal();
  }
}

void write_generator_index_csv(std::ostream& out, const GeneratorMatrix& gen, const StateSpace& states) {
  bool single_char = true;
  for (const auto& l : states.labels()) single_char = single_char && l.size() == 1;
  CsvWriter csv(out);
  csv.field("index").field("config").end_row();
  for (std::size_t x = 0; x < gen.size(); ++x) {
    std::string config;
    const auto decoded = gen.decode(x);
    for (std::size_t i = 0; i < decoded.size(); ++i) {
      if (!single_char && i > 0) config += '|';
      config += states.label(decoded[i]);
    }
    csv.field(x).field(config).end_row();
  }
}

}  // namespace popmf
