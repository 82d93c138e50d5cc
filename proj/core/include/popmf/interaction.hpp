#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <vector>

namespace popmf {

/// One stored entry of a sparse row (or, for column views, of a sparse column;
/// `index` is then the row index).
struct WeightEntry {
  std::uint32_t index;
  double weight;
};

using SparseRows = std::vector<std::vector<WeightEntry>>;

/// Undirected edge between vertices u and v with an optional weight.
struct Edge {
  std::size_t u;
  std::size_t v;
  double weight = 1.0;
};

/// Row-stochastic aggregation matrix W (w_ij >= 0, rows sum to one).
///
/// Rows are stored in CSR form with strictly positive weights only. The
/// complete matrix 11^T/N is represented by a flag and never materialized:
/// every query answers as if w_ij = 1/N. A column index is built on the first
/// column query and shared between copies; the matrix is immutable otherwise,
/// so instances may be shared freely across threads.
class InteractionMatrix {
 public:
  static constexpr double kDefaultRowTolerance = 1e-12;

  /// W = 11^T / N.
  static InteractionMatrix complete(std::size_t n);

  /// Validated construction. Throws ValidationError on negative or non-finite
  /// weights, out-of-range or duplicate columns, or a row sum off by more than
  /// `row_tolerance`. Zero weights are dropped.
  static InteractionMatrix from_rows(SparseRows rows, double row_tolerance = kDefaultRowTolerance);

  /// Raw nonnegative matrix without the row-sum check. Only the density
  /// measures accept these; models refuse them.
  static InteractionMatrix unchecked(SparseRows rows);
  static InteractionMatrix unchecked_dense(const std::vector<std::vector<double>>& dense);

  std::size_t size() const noexcept { return n_; }
  bool homogeneous() const noexcept { return homogeneous_; }
  /// True when the row-sum invariant was checked at construction.
  bool validated() const noexcept { return validated_; }
  double row_tolerance() const noexcept { return row_tolerance_; }
  std::size_t nonzeros() const noexcept;

  /// Sparse row i (entries sorted by column). Not available when homogeneous().
  std::span<const WeightEntry> row(std::size_t i) const;
  /// Sparse column j; entry.index is the row. Not available when homogeneous().
  std::span<const WeightEntry> column(std::size_t j) const;

  double weight(std::size_t i, std::size_t j) const;

  /// y = W x
  void multiply(std::span<const double> x, std::span<double> y) const;
  /// y = W^T x
  void multiply_transpose(std::span<const double> x, std::span<double> y) const;

  std::vector<std::vector<double>> to_dense() const;

 private:
  struct ColumnIndex;

  InteractionMatrix() = default;
  static InteractionMatrix build(SparseRows rows, bool check_rows, double row_tolerance);
  const ColumnIndex& columns() const;

  std::size_t n_ = 0;
  bool homogeneous_ = false;
  bool validated_ = false;
  double row_tolerance_ = kDefaultRowTolerance;
  std::vector<std::size_t> offsets_;
  std::vector<WeightEntry> entries_;
  std::shared_ptr<ColumnIndex> columns_;
};

/// Random-walk matrix of an undirected simple graph: w_ij = 1/deg(i) on edges.
/// Rejects self-loops, duplicate edges, out-of-range vertices and isolated
/// vertices (the message names the vertex). Edge weights are ignored.
InteractionMatrix from_adjacency(std::span<const Edge> edges, std::size_t n);

/// Row normalization of a nonnegative weighted matrix A: w_ij = A_ij / sum_j A_ij.
/// Rejects rows with zero sum.
InteractionMatrix row_normalized(const SparseRows& a);

/// Even degree used by the nearest-neighbor ring: the even number closest to
/// density * n, ties rounded down. Throws unless 2 <= d <= n - 1.
std::size_t nearest_neighbor_degree(std::size_t n, double density);

/// Ring of n vertices, each joined to its d/2 closest neighbors on either side,
/// with random-walk weights 1/d.
InteractionMatrix nearest_neighbor(std::size_t n, double density);

/// Complete graph with per-vertex link failures F_i:
/// w_ij = 1/(n - 1 - |F_i|) for j outside F_i and j != i.
InteractionMatrix with_link_failures(std::size_t n, const std::vector<std::vector<std::size_t>>& failures);

/// theta(W) = ||W||_F / sqrt(N).
double local_density(const InteractionMatrix& w);

struct SpectralDensity {
  double lambda = 0.0;
  /// Change of the Rayleigh quotient in the final iteration.
  double residual = 0.0;
  std::size_t iterations = 0;
};

/// lambda(W) = sup over x orthogonal to 1 of ||Wx|| / ||x||, i.e. the largest
/// singular value of W(I - 11^T/N). Matrix-free power iteration on
/// (W Pi)^T (W Pi) from a fixed pseudo-random centered start. Stops when the
/// Rayleigh quotient changes by at most `tol` or after `max_iter` iterations;
/// callers check `residual` against `tol` to detect non-convergence.
SpectralDensity spectral_density(const InteractionMatrix& w, double tol = 1e-13,
                                 std::size_t max_iter = 100000);

/// Largest column sum (the R of the NIMFA concentration bound). At least 1
/// for row-stochastic W.
double max_column_sum(const InteractionMatrix& w);

/// Closed-form eigenvalues of the nearest-neighbor ring matrix:
/// mu_0 = 1, mu_k = (sin(pi k (d+1) / n) / sin(pi k / n) - 1) / d.
std::vector<double> circulant_spectrum(std::size_t n, double density);

struct DensityReport {
  double theta = 0.0;
  double lambda = 0.0;
  double max_col_sum = 0.0;
  std::size_t lambda_iterations = 0;
  double lambda_residual = 0.0;
};

DensityReport density_report(const InteractionMatrix& w, double tol = 1e-13,
                             std::size_t max_iter = 100000);

/// Dense CSV dump for debugging: header line `n=<N>`, then N rows. N <= 256.
void write_dense_csv(std::ostream& out, const InteractionMatrix& w);

}  // namespace popmf
