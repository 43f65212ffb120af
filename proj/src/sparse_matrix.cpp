#include "kernelsurf/sparse_matrix.hpp"

#include <algorithm>
#include <ostream>
#include <sstream>
#include <string>

#include "kernelsurf/error.hpp"

namespace kernelsurf {

SparseMatrix::SparseMatrix(std::size_t rows, std::size_t cols, std::vector<std::uint64_t> row_offsets,
                           std::vector<std::uint32_t> col_indices, std::vector<double> values)
    : rows_(rows),
      cols_(cols),
      offsets_(std::move(row_offsets)),
      cols_idx_(std::move(col_indices)),
      values_(std::move(values)) {
  if (offsets_.size() != rows_ + 1 || offsets_.front() != 0 || offsets_.back() != values_.size() ||
      cols_idx_.size() != values_.size()) {
    throw Error(ErrorCode::SizeMismatch, "inconsistent CSR arrays");
  }
  for (std::size_t r = 0; r < rows_; ++r) {
    if (offsets_[r] > offsets_[r + 1]) throw Error(ErrorCode::SizeMismatch, "CSR offsets not monotone");
    for (auto k = offsets_[r]; k < offsets_[r + 1]; ++k) {
      if (cols_idx_[k] >= cols_ || (k > offsets_[r] && cols_idx_[k] <= cols_idx_[k - 1])) {
        throw Error(ErrorCode::SizeMismatch, "CSR column indices unsorted or out of range in row " + std::to_string(r));
      }
    }
  }
}

void SparseMatrix::multiply(std::span<const double> x, std::span<double> y) const {
  if (x.size() != cols_ || y.size() != rows_) throw Error(ErrorCode::SizeMismatch, "mat-vec size mismatch");
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(rows_); ++r) {
    double s = 0.0;
    for (auto k = offsets_[r]; k < offsets_[r + 1]; ++k) s += values_[k] * x[cols_idx_[k]];
    y[r] = s;
  }
}

SparseMatrix SparseMatrix::transpose() const {
  std::vector<std::uint64_t> offsets(cols_ + 1, 0);
  for (auto c : cols_idx_) ++offsets[c + 1];
  for (std::size_t c = 0; c < cols_; ++c) offsets[c + 1] += offsets[c];
  std::vector<std::uint64_t> cursor(offsets.begin(), offsets.end() - 1);
  std::vector<std::uint32_t> idx(values_.size());
  std::vector<double> vals(values_.size());
  // Rows are visited in increasing order, so each transposed row is sorted.
  for (std::size_t r = 0; r < rows_; ++r) {
    for (auto k = offsets_[r]; k < offsets_[r + 1]; ++k) {
      const auto dst = cursor[cols_idx_[k]]++;
      idx[dst] = static_cast<std::uint32_t>(r);
      vals[dst] = values_[k];
    }
  }
  return SparseMatrix(cols_, rows_, std::move(offsets), std::move(idx), std::move(vals));
}

Eigen::VectorXd SparseMatrix::weighted_column_norms2(std::span<const double> weights) const {
  if (!weights.empty() && weights.size() != rows_) throw Error(ErrorCode::SizeMismatch, "weight count mismatch");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(cols_));
  for (std::size_t r = 0; r < rows_; ++r) {
    const double w = weights.empty() ? 1.0 : weights[r];
    for (auto k = offsets_[r]; k < offsets_[r + 1]; ++k) out[cols_idx_[k]] += w * values_[k] * values_[k];
  }
  return out;
}

double SparseMatrix::coeff(std::size_t row, std::size_t col) const {
  const auto begin = cols_idx_.begin() + static_cast<std::ptrdiff_t>(offsets_.at(row));
  const auto end = cols_idx_.begin() + static_cast<std::ptrdiff_t>(offsets_.at(row + 1));
  const auto it = std::lower_bound(begin, end, static_cast<std::uint32_t>(col));
  return (it != end && *it == col) ? values_[static_cast<std::size_t>(it - cols_idx_.begin())] : 0.0;
}

Eigen::MatrixXd SparseMatrix::to_dense() const {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows_), static_cast<Eigen::Index>(cols_));
  for (std::size_t r = 0; r < rows_; ++r) {
    for (auto k = offsets_[r]; k < offsets_[r + 1]; ++k) m(static_cast<Eigen::Index>(r), cols_idx_[k]) = values_[k];
  }
  return m;
}

std::size_t SparseMatrix::memory_bytes() const {
  return offsets_.capacity() * sizeof(std::uint64_t) + cols_idx_.capacity() * sizeof(std::uint32_t) +
         values_.capacity() * sizeof(double);
}

void SparseMatrix::write_triplets(std::ostream& os) const {
  std::ostringstream buf;
  buf.precision(17);
  buf << rows_ << ' ' << cols_ << ' ' << nnz() << '\n';
  for (std::size_t r = 0; r < rows_; ++r) {
    for (auto k = offsets_[r]; k < offsets_[r + 1]; ++k) buf << r << ' ' << cols_idx_[k] << ' ' << values_[k] << '\n';
  }
  os << buf.str();
  if (!os) throw Error(ErrorCode::IoError, "failed to write matrix triplets");
}

void SparseBuilder::reserve(std::size_t rows, std::size_t nnz) {
  offsets_.reserve(rows + 1);
  col_indices_.reserve(nnz);
  values_.reserve(nnz);
}

void SparseBuilder::finish_row() {
  std::sort(pending_.begin(), pending_.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  for (std::size_t i = 0; i < pending_.size();) {
    const auto col = pending_[i].first;
    if (col >= cols_) throw Error(ErrorCode::SizeMismatch, "column index out of range");
    double sum = 0.0;
    for (; i < pending_.size() && pending_[i].first == col; ++i) sum += pending_[i].second;
    col_indices_.push_back(col);
    values_.push_back(sum);
  }
  pending_.clear();
  offsets_.push_back(values_.size());
}

SparseMatrix SparseBuilder::build() && {
  if (!pending_.empty()) finish_row();
  const std::size_t rows = offsets_.size() - 1;
  return SparseMatrix(rows, cols_, std::move(offsets_), std::move(col_indices_), std::move(values_));
}

double deterministic_dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorCode::SizeMismatch, "dot product size mismatch");
  constexpr std::size_t kBlock = 4096;
  const std::size_t blocks = (a.size() + kBlock - 1) / kBlock;
  std::vector<double> partial(blocks, 0.0);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t blk = 0; blk < static_cast<std::ptrdiff_t>(blocks); ++blk) {
    const std::size_t lo = static_cast<std::size_t>(blk) * kBlock;
    const std::size_t hi = std::min(a.size(), lo + kBlock);
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += a[i] * b[i];
    partial[static_cast<std::size_t>(blk)] = s;
  }
  double total = 0.0;
  for (double p : partial) total += p;
  return total;
}

}  // namespace kernelsurf
