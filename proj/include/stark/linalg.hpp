#pragma once

// Thin value-type wrappers over the LAPACK routines the toolkit needs:
// MRRR for symmetric tridiagonal and dense matrices, and singular values.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <lapacke.h>

#include "stark/error.hpp"

namespace stark {

/// Dense real matrix, column-major.
class DenseMatrix {
public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static DenseMatrix identity(std::size_t n) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i)
      m(i, i) = 1.0;
    return m;
  }

  [[nodiscard]] std::size_t rows() const { return rows_; }
  [[nodiscard]] std::size_t cols() const { return cols_; }

  double &operator()(std::size_t r, std::size_t c) { return data_[c * rows_ + r]; }
  double operator()(std::size_t r, std::size_t c) const {
    return data_[c * rows_ + r];
  }

  [[nodiscard]] std::span<const double> column(std::size_t c) const {
    return {data_.data() + c * rows_, rows_};
  }
  [[nodiscard]] std::span<double> column(std::size_t c) {
    return {data_.data() + c * rows_, rows_};
  }

  [[nodiscard]] const std::vector<double> &data() const { return data_; }
  [[nodiscard]] std::vector<double> &data() { return data_; }

  [[nodiscard]] double max_abs() const {
    double m = 0.0;
    for (double v : data_)
      m = std::max(m, std::abs(v));
    return m;
  }

  friend bool operator==(const DenseMatrix &, const DenseMatrix &) = default;

private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    s += a[i] * b[i];
  return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

/// Eigenvalues (ascending) with matching orthonormal eigenvector columns.
struct EigenPairs {
  std::vector<double> values;
  DenseMatrix vectors;
};

/// All eigenpairs of a symmetric tridiagonal matrix (LAPACK dstevr).
inline EigenPairs tridiagonal_eigh(std::span<const double> diagonal,
                                   std::span<const double> off_diagonal) {
  const auto n = static_cast<lapack_int>(diagonal.size());
  detail::require(n >= 1, "empty tridiagonal matrix");
  detail::require(off_diagonal.size() + 1 == diagonal.size(),
                  "tridiagonal off-diagonal length mismatch");
  std::vector<double> d(diagonal.begin(), diagonal.end());
  // dstevr uses e as workspace and needs length n.
  std::vector<double> e(static_cast<std::size_t>(n), 0.0);
  std::copy(off_diagonal.begin(), off_diagonal.end(), e.begin());

  EigenPairs out;
  out.values.resize(static_cast<std::size_t>(n));
  out.vectors = DenseMatrix(static_cast<std::size_t>(n), static_cast<std::size_t>(n));
  std::vector<lapack_int> support(2 * static_cast<std::size_t>(n));
  lapack_int found = 0;
  const lapack_int info = LAPACKE_dstevr(
      LAPACK_COL_MAJOR, 'V', 'A', n, d.data(), e.data(), 0.0, 0.0, 0, 0, 0.0,
      &found, out.values.data(), out.vectors.data().data(), n, support.data());
  if (info != 0 || found != n)
    throw ConvergenceError("dstevr failed on " + std::to_string(n) +
                           "x" + std::to_string(n) +
                           " tridiagonal matrix, info=" + std::to_string(info));
  return out;
}

/// All eigenpairs of a dense symmetric matrix (LAPACK dsyevr, lower triangle).
inline EigenPairs symmetric_eigh(const DenseMatrix &matrix) {
  detail::require(matrix.rows() == matrix.cols(), "matrix is not square");
  const auto n = static_cast<lapack_int>(matrix.rows());
  detail::require(n >= 1, "empty matrix");
  DenseMatrix a = matrix;
  EigenPairs out;
  out.values.resize(static_cast<std::size_t>(n));
  out.vectors = DenseMatrix(static_cast<std::size_t>(n), static_cast<std::size_t>(n));
  std::vector<lapack_int> support(2 * static_cast<std::size_t>(n));
  lapack_int found = 0;
  const lapack_int info = LAPACKE_dsyevr(
      LAPACK_COL_MAJOR, 'V', 'A', 'L', n, a.data().data(), n, 0.0, 0.0, 0, 0,
      0.0, &found, out.values.data(), out.vectors.data().data(), n,
      support.data());
  if (info != 0 || found != n)
    throw ConvergenceError("dsyevr failed on dense " + std::to_string(n) +
                           "x" + std::to_string(n) +
                           " matrix, info=" + std::to_string(info));
  return out;
}

/// Eigenvalues only of a dense symmetric matrix.
inline std::vector<double> symmetric_eigvals(const DenseMatrix &matrix) {
  detail::require(matrix.rows() == matrix.cols(), "matrix is not square");
  const auto n = static_cast<lapack_int>(matrix.rows());
  DenseMatrix a = matrix;
  std::vector<double> w(static_cast<std::size_t>(n));
  const lapack_int info =
      LAPACKE_dsyev(LAPACK_COL_MAJOR, 'N', 'L', n, a.data().data(), n, w.data());
  if (info != 0)
    throw ConvergenceError("dsyev failed, info=" + std::to_string(info));
  return w;
}

/// Singular values (descending) of a general matrix.
inline std::vector<double> singular_values(const DenseMatrix &matrix) {
  const auto m = static_cast<lapack_int>(matrix.rows());
  const auto n = static_cast<lapack_int>(matrix.cols());
  DenseMatrix a = matrix;
  std::vector<double> s(static_cast<std::size_t>(std::min(m, n)));
  const lapack_int info = LAPACKE_dgesdd(LAPACK_COL_MAJOR, 'N', m, n,
                                         a.data().data(), m, s.data(), nullptr,
                                         1, nullptr, 1);
  if (info != 0)
    throw ConvergenceError("dgesdd failed, info=" + std::to_string(info));
  return s;
}

/// A^T B for column-major A (n x p) and B (n x q).
inline DenseMatrix transpose_times(const DenseMatrix &a, const DenseMatrix &b) {
  detail::require(a.rows() == b.rows(), "transpose_times: row mismatch");
  DenseMatrix out(a.cols(), b.cols());
  for (std::size_t j = 0; j < b.cols(); ++j)
    for (std::size_t i = 0; i < a.cols(); ++i)
      out(i, j) = dot(a.column(i), b.column(j));
  return out;
}

} // namespace stark
