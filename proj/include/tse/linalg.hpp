#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "tse/errors.hpp"

namespace tse {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using IndexList = std::vector<int>;

namespace linalg {

inline bool is_symmetric(const Matrix& m, double rel_tol = 1e-12) {
  if (m.rows() != m.cols()) return false;
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= rel_tol * scale;
}

/// Lower Cholesky factor; throws NumericalError when `m` is not positive
/// definite.
inline Matrix cholesky_lower(const Matrix& m, const char* what = "matrix") {
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success)
    throw NumericalError(std::string(what) + " is not positive definite");
  Matrix l = llt.matrixL();
  for (Eigen::Index i = 0; i < l.rows(); ++i)
    if (!(l(i, i) > 0.0) || !std::isfinite(l(i, i)))
      throw NumericalError(std::string(what) + " is not positive definite");
  return l;
}

inline double log_det_from_chol(const Matrix& l) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < l.rows(); ++i) s += std::log(l(i, i));
  return 2.0 * s;
}

/// Solves (L Lᵀ) x = rhs for a lower factor L.
template <class Rhs>
inline auto chol_solve(const Matrix& l, const Rhs& rhs) {
  using Result = std::conditional_t<Rhs::ColsAtCompileTime == 1, Vector, Matrix>;
  Result y = l.triangularView<Eigen::Lower>().solve(rhs);
  return Result(l.transpose().triangularView<Eigen::Upper>().solve(y));
}

/// Symmetric (spectral) square root of a symmetric PD matrix.
inline Matrix sym_sqrt(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m);
  if (es.info() != Eigen::Success || es.eigenvalues().minCoeff() <= 0.0)
    throw NumericalError("square root requires a positive definite matrix");
  return es.eigenvectors() * es.eigenvalues().cwiseSqrt().asDiagonal() *
         es.eigenvectors().transpose();
}

inline Vector take(const Vector& v, const IndexList& idx) {
  Vector out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out(i) = v(idx[i]);
  return out;
}

inline Matrix take(const Matrix& m, const IndexList& rows, const IndexList& cols) {
  Matrix out(static_cast<Eigen::Index>(rows.size()),
             static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j) out(i, j) = m(rows[i], cols[j]);
  return out;
}

inline IndexList iota(int n, int start = 0) {
  IndexList out(static_cast<std::size_t>(n));
  std::iota(out.begin(), out.end(), start);
  return out;
}

/// Indices of 0..n-1 that are not in `idx`, in increasing order.
inline IndexList complement(int n, const IndexList& idx) {
  std::vector<bool> used(static_cast<std::size_t>(n), false);
  for (int i : idx) used[static_cast<std::size_t>(i)] = true;
  IndexList out;
  for (int i = 0; i < n; ++i)
    if (!used[static_cast<std::size_t>(i)]) out.push_back(i);
  return out;
}

inline Vector concat(const Vector& a, const Vector& b) {
  Vector out(a.size() + b.size());
  out << a, b;
  return out;
}

inline Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

}  // namespace linalg
}  // namespace tse
