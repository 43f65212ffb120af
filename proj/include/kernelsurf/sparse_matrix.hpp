#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace kernelsurf {

/// Compressed sparse row matrix. Column indices are sorted within each row.
class SparseMatrix {
 public:
  SparseMatrix() = default;
  SparseMatrix(std::size_t rows, std::size_t cols, std::vector<std::uint64_t> row_offsets,
               std::vector<std::uint32_t> col_indices, std::vector<double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t nnz() const { return values_.size(); }
  std::span<const std::uint64_t> row_offsets() const { return offsets_; }
  std::span<const std::uint32_t> col_indices() const { return cols_idx_; }
  std::span<const double> values() const { return values_; }

  /// y = A x. Rows are independent, so the product parallelizes over rows
  /// with a fixed per-row summation order.
  void multiply(std::span<const double> x, std::span<double> y) const;

  SparseMatrix transpose() const;

  /// Sum over rows of weight[row] * A(row, c)^2 for every column c; empty
  /// weights means all ones.
  Eigen::VectorXd weighted_column_norms2(std::span<const double> weights = {}) const;

  double coeff(std::size_t row, std::size_t col) const;
  Eigen::MatrixXd to_dense() const;
  std::size_t memory_bytes() const;

  /// "rows cols nnz" header, then one "row col value" line per entry.
  void write_triplets(std::ostream& os) const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::uint64_t> offsets_{0};
  std::vector<std::uint32_t> cols_idx_;
  std::vector<double> values_;
};

/// Row-at-a-time CSR builder. Entries of a row may arrive in any order;
/// duplicates are summed.
class SparseBuilder {
 public:
  explicit SparseBuilder(std::size_t cols) : cols_(cols) {}
  void reserve(std::size_t rows, std::size_t nnz);
  void add(std::uint32_t col, double value) { pending_.emplace_back(col, value); }
  void finish_row();
  SparseMatrix build() &&;

 private:
  std::size_t cols_;
  std::vector<std::pair<std::uint32_t, double>> pending_;
  std::vector<std::uint64_t> offsets_{0};
  std::vector<std::uint32_t> col_indices_;
  std::vector<double> values_;
};

/// Dot product with a fixed blocked summation order, so results do not
/// depend on the worker count.
double deterministic_dot(std::span<const double> a, std::span<const double> b);

}  // namespace kernelsurf
