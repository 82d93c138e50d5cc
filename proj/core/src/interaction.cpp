#include "popmf/interaction.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "popmf/csv.hpp"
#include "popmf/error.hpp"
#include "popmf/random.hpp"

namespace popmf {

struct InteractionMatrix::ColumnIndex {
  std::once_flag once;
  std::vector<std::size_t> offsets;
  std::vector<WeightEntry> entries;
};

InteractionMatrix InteractionMatrix::complete(std::size_t n) {
  if (n == 0) throw ValidationError("complete: n must be positive");
  InteractionMatrix w;
  w.n_ = n;
  w.homogeneous_ = true;
  w.validated_ = true;
  return w;
}

InteractionMatrix InteractionMatrix::from_rows(SparseRows rows, double row_tolerance) {
  return build(std::move(rows), true, row_tolerance);
}

InteractionMatrix InteractionMatrix::unchecked(SparseRows rows) {
  return build(std::move(rows), false, kDefaultRowTolerance);
}

InteractionMatrix InteractionMatrix::unchecked_dense(const std::vector<std::vector<double>>& dense) {
  SparseRows rows(dense.size());
  for (std::size_t i = 0; i < dense.size(); ++i) {
    if (dense[i].size() != dense.size()) throw ValidationError("unchecked_dense: matrix is not square");
    for (std::size_t j = 0; j < dense[i].size(); ++j) {
      if (dense[i][j] != 0.0) rows[i].push_back({static_cast<std::uint32_t>(j), dense[i][j]});
    }
  }
  return build(std::move(rows), false, kDefaultRowTolerance);
}

InteractionMatrix InteractionMatrix::build(SparseRows rows, bool check_rows, double row_tolerance) {
  const std::size_t n = rows.size();
  if (n == 0) throw ValidationError("interaction matrix must have at least one row");
  if (n > std::numeric_limits<std::uint32_t>::max()) throw ValidationError("interaction matrix too large");
  if (!(row_tolerance >= 0.0)) throw ValidationError("row tolerance must be nonnegative");

  InteractionMatrix w;
  w.n_ = n;
  w.validated_ = check_rows;
  w.row_tolerance_ = row_tolerance;
  w.offsets_.reserve(n + 1);
  w.offsets_.push_back(0);
  for (std::size_t i = 0; i < n; ++i) {
    auto& row = rows[i];
    std::sort(row.begin(), row.end(), [](const WeightEntry& a, const WeightEntry& b) { return a.index < b.index; });
    double sum = 0.0;
    for (std::size_t k = 0; k < row.size(); ++k) {
      const auto& e = row[k];
      if (e.index >= n) {
        std::ostringstream msg;
        msg << "row " << i << ": column " << e.index << " out of range for n=" << n;
        throw ValidationError(msg.str());
      }
      if (!std::isfinite(e.weight) || e.weight < 0.0) {
        std::ostringstream msg;
        msg << "row " << i << ", column " << e.index << ": weight " << e.weight << " is not a nonnegative number";
        throw ValidationError(msg.str());
      }
      if (k > 0 && row[k - 1].index == e.index) {
        std::ostringstream msg;
        msg << "row " << i << ": duplicate column " << e.index;
        throw ValidationError(msg.str());
      }
      sum += e.weight;
      if (e.weight > 0.0) w.entries_.push_back(e);
    }
    if (check_rows && std::abs(sum - 1.0) > row_tolerance) {
      std::ostringstream msg;
      msg.precision(17);
      msg << "row " << i << " sums to " << sum << ", not 1 (tolerance " << row_tolerance << ")";
      throw ValidationError(msg.str());
    }
    w.offsets_.push_back(w.entries_.size());
  }
  w.columns_ = std::make_shared<ColumnIndex>();
  return w;
}

std::size_t InteractionMatrix::nonzeros() const noexcept { return homogeneous_ ? n_ * n_ : entries_.size(); }

std::span<const WeightEntry> InteractionMatrix::row(std::size_t i) const {
  if (homogeneous_) throw std::logic_error("row(): homogeneous matrix has no explicit rows");
  return {entries_.data() + offsets_[i], offsets_[i + 1] - offsets_[i]};
}

const InteractionMatrix::ColumnIndex& InteractionMatrix::columns() const {
  std::call_once(columns_->once, [this] {
    auto& c = *columns_;
    std::vector<std::size_t> counts(n_ + 1, 0);
    for (const auto& e : entries_) ++counts[e.index + 1];
    std::partial_sum(counts.begin(), counts.end(), counts.begin());
    c.offsets = counts;
    c.entries.resize(entries_.size());
    std::vector<std::size_t> cursor(counts.begin(), counts.end() - 1);
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t k = offsets_[i]; k < offsets_[i + 1]; ++k) {
        const auto& e = entries_[k];
        c.entries[cursor[e.index]++] = {static_cast<std::uint32_t>(i), e.weight};
      }
    }
  });
  return *columns_;
}

std::span<const WeightEntry> InteractionMatrix::column(std::size_t j) const {
  if (homogeneous_) throw std::logic_error("column(): homogeneous matrix has no explicit columns");
  const auto& c = columns();
  return {c.entries.data() + c.offsets[j], c.offsets[j + 1] - c.offsets[j]};
}

double InteractionMatrix::weight(std::size_t i, std::size_t j) const {
  if (homogeneous_) return 1.0 / static_cast<double>(n_);
  const auto r = row(i);
  const auto it = std::lower_bound(r.begin(), r.end(), j,
                                   [](const WeightEntry& e, std::size_t col) { return e.index < col; });
  return (it != r.end() && it->index == j) ? it->weight : 0.0;
}

void InteractionMatrix::multiply(std::span<const double> x, std::span<double> y) const {
  if (homogeneous_) {
    const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n_);
    std::fill(y.begin(), y.end(), mean);
    return;
  }
  for (std::size_t i = 0; i < n_; ++i) {
    double acc = 0.0;
    for (std::size_t k = offsets_[i]; k < offsets_[i + 1]; ++k) acc += entries_[k].weight * x[entries_[k].index];
    y[i] = acc;
  }
}

void InteractionMatrix::multiply_transpose(std::span<const double> x, std::span<double> y) const {
  if (homogeneous_) {
    multiply(x, y);
    return;
  }
  std::fill(y.begin(), y.end(), 0.0);
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t k = offsets_[i]; k < offsets_[i + 1]; ++k) y[entries_[k].index] += entries_[k].weight * x[i];
  }
}

std::vector<std::vector<double>> InteractionMatrix::to_dense() const {
  std::vector<std::vector<double>> dense(n_, std::vector<double>(n_, 0.0));
  for (std::size_t i = 0; i < n_; ++i) {
    if (homogeneous_) {
      std::fill(dense[i].begin(), dense[i].end(), 1.0 / static_cast<double>(n_));
    } else {
      for (const auto& e : row(i)) dense[i][e.index] = e.weight;
    }
  }
  return dense;
}

// ---------------------------------------------------------------------------
// constructors

InteractionMatrix from_adjacency(std::span<const Edge> edges, std::size_t n) {
  if (n == 0) throw ValidationError("from_adjacency: n must be positive");
  std::vector<std::vector<std::size_t>> neighbors(n);
  for (const auto& e : edges) {
    if (e.u >= n || e.v >= n) {
      std::ostringstream msg;
      msg << "edge (" << e.u << ", " << e.v << ") references a vertex outside [0, " << n << ")";
      throw ValidationError(msg.str());
    }
    if (e.u == e.v) {
      std::ostringstream msg;
      msg << "self-loop at vertex " << e.u;
      throw ValidationError(msg.str());
    }
    neighbors[e.u].push_back(e.v);
    neighbors[e.v].push_back(e.u);
  }
  SparseRows rows(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& nb = neighbors[i];
    if (nb.empty()) {
      std::ostringstream msg;
      msg << "vertex " << i << " has degree zero";
      throw ValidationError(msg.str());
    }
    std::sort(nb.begin(), nb.end());
    if (auto dup = std::adjacent_find(nb.begin(), nb.end()); dup != nb.end()) {
      std::ostringstream msg;
      msg << "duplicate edge (" << i << ", " << *dup << ")";
      throw ValidationError(msg.str());
    }
    const double w = 1.0 / static_cast<double>(nb.size());
    rows[i].reserve(nb.size());
    for (auto j : nb) rows[i].push_back({static_cast<std::uint32_t>(j), w});
  }
  return InteractionMatrix::from_rows(std::move(rows));
}

InteractionMatrix row_normalized(const SparseRows& a) {
  SparseRows rows(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    double sum = 0.0;
    for (const auto& e : a[i]) {
      if (!std::isfinite(e.weight) || e.weight < 0.0) {
        std::ostringstream msg;
        msg << "row " << i << ": weight " << e.weight << " is not a nonnegative number";
        throw ValidationError(msg.str());
      }
      sum += e.weight;
    }
    if (!(sum > 0.0)) {
      std::ostringstream msg;
      msg << "agent " << i << " has zero total interaction weight";
      throw ValidationError(msg.str());
    }
    rows[i].reserve(a[i].size());
    for (const auto& e : a[i]) rows[i].push_back({e.index, e.weight / sum});
  }
  return InteractionMatrix::from_rows(std::move(rows));
}

std::size_t nearest_neighbor_degree(std::size_t n, double density) {
  if (!(density > 0.0 && density <= 1.0)) throw ValidationError("nearest_neighbor: density must lie in (0, 1]");
  const double half = density * static_cast<double>(n) / 2.0;
  const double lower = std::floor(half);
  // Closest even number to density*n; exact ties (density*n odd) round down.
  const double frac = half - lower;
  const double pick = (frac > 0.5 + 1e-9) ? lower + 1.0 : lower;
  const auto d = static_cast<std::size_t>(2.0 * pick);
  if (d < 2 || d + 1 > n) {
    std::ostringstream msg;
    msg << "nearest_neighbor: degree " << d << " from n=" << n << ", density=" << density
        << " is outside [2, n-1]";
    throw ValidationError(msg.str());
  }
  return d;
}

InteractionMatrix nearest_neighbor(std::size_t n, double density) {
  const std::size_t d = nearest_neighbor_degree(n, density);
  const std::size_t half = d / 2;
  const double w = 1.0 / static_cast<double>(d);
  SparseRows rows(n);
  for (std::size_t i = 0; i < n; ++i) {
    rows[i].reserve(d);
    for (std::size_t s = 1; s <= half; ++s) {
      rows[i].push_back({static_cast<std::uint32_t>((i + s) % n), w});
      rows[i].push_back({static_cast<std::uint32_t>((i + n - s) % n), w});
    }
  }
  return InteractionMatrix::from_rows(std::move(rows));
}

InteractionMatrix with_link_failures(std::size_t n, const std::vector<std::vector<std::size_t>>& failures) {
  if (n < 2) throw ValidationError("with_link_failures: need n >= 2");
  if (failures.size() != n) throw ValidationError("with_link_failures: need one failure set per vertex");
  SparseRows rows(n);
  std::vector<char> failed(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(failed.begin(), failed.end(), 0);
    std::size_t count = 0;
    for (auto j : failures[i]) {
      if (j >= n) {
        std::ostringstream msg;
        msg << "failure set of vertex " << i << " references vertex " << j << " outside [0, " << n << ")";
        throw ValidationError(msg.str());
      }
      if (j == i) {
        std::ostringstream msg;
        msg << "failure set of vertex " << i << " contains the vertex itself";
        throw ValidationError(msg.str());
      }
      if (!failed[j]) ++count;
      failed[j] = 1;
    }
    if (count + 2 > n) {
      std::ostringstream msg;
      msg << "vertex " << i << " loses all " << count << " links (empty neighborhood)";
      throw ValidationError(msg.str());
    }
    const double w = 1.0 / static_cast<double>(n - 1 - count);
    rows[i].reserve(n - 1 - count);
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i && !failed[j]) rows[i].push_back({static_cast<std::uint32_t>(j), w});
    }
  }
  return InteractionMatrix::from_rows(std::move(rows));
}

// ---------------------------------------------------------------------------
// density measures

double local_density(const InteractionMatrix& w) {
  const auto n = static_cast<double>(w.size());
  if (w.homogeneous()) return 1.0 / std::sqrt(n);
  double sum_sq = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    for (const auto& e : w.row(i)) sum_sq += e.weight * e.weight;
  }
  return std::sqrt(sum_sq / n);
}

namespace {

void center(std::span<double> x) {
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  for (auto& v : x) v -= mean;
}

double norm2(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

}  // namespace

SpectralDensity spectral_density(const InteractionMatrix& w, double tol, std::size_t max_iter) {
  const std::size_t n = w.size();
  if (n < 2) throw ValidationError("spectral_density: need N >= 2");
  if (!(tol > 0.0) || max_iter == 0) throw ValidationError("spectral_density: tol and max_iter must be positive");

  // Fixed pseudo-random start. Structured starts (e.g. alternating signs) are
  // exact eigenvectors of even-order circulants and would stall.
  CounterRng rng(0x6c616d626461ULL);
  std::vector<double> x(n), y(n), z(n);
  for (auto& v : x) v = rng.uniform() - 0.5;
  center(x);
  double nx = norm2(x);
  for (auto& v : x) v /= nx;

  SpectralDensity result;
  double previous = 0.0;
  for (std::size_t it = 1; it <= max_iter; ++it) {
    w.multiply(x, y);
    const double quotient = [&] {
      double s = 0.0;
      for (double v : y) s += v * v;
      return s;
    }();
    result.iterations = it;
    result.lambda = std::sqrt(quotient);
    result.residual = it == 1 ? quotient : std::abs(quotient - previous);
    w.multiply_transpose(y, z);
    center(z);
    const double nz = norm2(z);
    // A quotient at rounding level means W annihilates the mean-zero space;
    // iterating further would only amplify the cancellation residue, which is
    // constant and hence no longer mean-zero.
    if (nz == 0.0 || quotient <= 1e-30) {
      result.residual = 0.0;
      break;
    }
    for (std::size_t i = 0; i < n; ++i) x[i] = z[i] / nz;
    if (it > 1 && result.residual <= tol) break;
    previous = quotient;
  }
  return result;
}

double max_column_sum(const InteractionMatrix& w) {
  if (w.homogeneous()) return 1.0;
  std::vector<double> sums(w.size(), 0.0);
  for (std::size_t i = 0; i < w.size(); ++i) {
    for (const auto& e : w.row(i)) sums[e.index] += e.weight;
  }
  return *std::max_element(sums.begin(), sums.end());
}

std::vector<double> circulant_spectrum(std::size_t n, double density) {
  const std::size_t d = nearest_neighbor_degree(n, density);
  const double nd = static_cast<double>(n);
  const double dd = static_cast<double>(d);
  std::vector<double> mu(n);
  mu[0] = 1.0;
  for (std::size_t k = 1; k < n; ++k) {
    const double kk = static_cast<double>(k);
    mu[k] = (std::sin(std::numbers::pi * kk * (dd + 1.0) / nd) / std::sin(std::numbers::pi * kk / nd) - 1.0) / dd;
  }
  return mu;
}

DensityReport density_report(const InteractionMatrix& w, double tol, std::size_t max_iter) {
  DensityReport report;
  report.theta = local_density(w);
  report.max_col_sum = max_column_sum(w);
  if (w.size() >= 2) {
    const auto sd = spectral_density(w, tol, max_iter);
    report.lambda = sd.lambda;
    report.lambda_iterations = sd.iterations;
    report.lambda_residual = sd.residual;
  }
  return report;
}

void write_dense_csv(std::ostream& out, const InteractionMatrix& w) {
  if (w.size() > 256) throw ValidationError("dense CSV export is limited to N <= 256");
  out << "n=" << w.size() << '\n';
  CsvWriter csv(out);
  for (const auto& row : w.to_dense()) {
    for (double v : row) csv.field(v);
    csv.end_row();
  }
}

}  // namespace popmf
