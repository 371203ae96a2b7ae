#pragma once

#include <cmath>
#include <numbers>
#include <set>
#include <string>
#include <utility>

#include "tse/linalg.hpp"
#include "tse/univariate.hpp"

namespace tse {

/// Elliptically contoured law EC_r(xi, Omega, h) for the normal and Student-t
/// density generators. Immutable once built; the Cholesky factor is cached.
class EllipticalJoint {
 public:
  EllipticalJoint(Kernel kernel, Vector xi, Matrix omega)
      : kernel_(kernel), xi_(std::move(xi)), omega_(std::move(omega)) {
    if (omega_.rows() != omega_.cols() || omega_.rows() != xi_.size())
      throw ValidationError("location and dispersion dimensions disagree");
    if (xi_.size() == 0) throw ValidationError("elliptical joint must have dimension >= 1");
    if (!xi_.allFinite() || !omega_.allFinite())
      throw ValidationError("location and dispersion must be finite");
    if (!linalg::is_symmetric(omega_)) throw ValidationError("dispersion matrix is not symmetric");
    omega_ = linalg::symmetrize(omega_);
    if (kernel_.is_t() && !(kernel_.nu > 0.0))
      throw ValidationError("Student-t kernel requires nu > 0");
    try {
      chol_ = linalg::cholesky_lower(omega_, "dispersion matrix");
    } catch (const NumericalError& e) {
      throw ValidationError(e.what());
    }
    log_det_ = linalg::log_det_from_chol(chol_);
  }

  static EllipticalJoint normal(Vector xi, Matrix omega) {
    return {Kernel::normal(), std::move(xi), std::move(omega)};
  }
  static EllipticalJoint student_t(double nu, Vector xi, Matrix omega) {
    return {Kernel::student_t(nu), std::move(xi), std::move(omega)};
  }

  const Kernel& kernel() const { return kernel_; }
  Family family() const { return kernel_.family; }
  bool is_t() const { return kernel_.is_t(); }
  double nu() const { return kernel_.nu; }
  int dim() const { return static_cast<int>(xi_.size()); }
  const Vector& xi() const { return xi_; }
  const Matrix& omega() const { return omega_; }
  const Matrix& chol() const { return chol_; }
  double log_det() const { return log_det_; }

  /// Same kernel, new location and dispersion.
  EllipticalJoint with(Vector xi, Matrix omega) const { return {kernel_, std::move(xi), std::move(omega)}; }

 private:
  Kernel kernel_;
  Vector xi_;
  Matrix omega_;
  Matrix chol_;
  double log_det_ = 0.0;
};

/// Split of 0..r-1 into two ordered, disjoint index lists.
struct IndexPartition {
  IndexList set_one;
  IndexList set_two;

  static IndexPartition from(int r, IndexList one, IndexList two) {
    std::set<int> seen;
    for (const IndexList* s : {&one, &two})
      for (int i : *s) {
        if (i < 0 || i >= r) throw ValidationError("partition index out of range");
        if (!seen.insert(i).second) throw ValidationError("partition index repeated");
      }
    if (static_cast<int>(seen.size()) != r) throw ValidationError("partition does not cover all indices");
    return {std::move(one), std::move(two)};
  }

  /// `two` and its complement (in increasing order) as set_one.
  static IndexPartition with_second(int r, IndexList two) {
    IndexList one = linalg::complement(r, two);
    return from(r, std::move(one), std::move(two));
  }
};

namespace detail {

inline void check_indices(int r, const IndexList& idx, bool allow_empty = false) {
  if (idx.empty() && !allow_empty) throw ValidationError("index list is empty");
  std::set<int> seen;
  for (int i : idx) {
    if (i < 0 || i >= r) throw ValidationError("index " + std::to_string(i) + " out of range");
    if (!seen.insert(i).second) throw ValidationError("index " + std::to_string(i) + " repeated");
  }
}

}  // namespace detail

/// Law of the sub-vector x[keep]; same kernel and degrees of freedom.
inline EllipticalJoint marginal(const EllipticalJoint& joint, const IndexList& keep) {
  detail::check_indices(joint.dim(), keep);
  return joint.with(linalg::take(joint.xi(), keep), linalg::take(joint.omega(), keep, keep));
}

/// (x - xi)ᵀ Omega⁻¹ (x - xi).
inline double mahalanobis(const EllipticalJoint& dist, const Vector& x) {
  if (x.size() != dist.dim()) throw ValidationError("mahalanobis: dimension mismatch");
  const Vector z = dist.chol().triangularView<Eigen::Lower>().solve(x - dist.xi());
  return z.squaredNorm();
}

/// ν²(x) = (ν + dim(x)) / (ν + δ(x)); Student-t only. Callers needing ν(x)
/// take the square root.
inline double nu_factor(const EllipticalJoint& dist, const Vector& x) {
  if (!dist.is_t()) throw ValidationError("nu_factor is defined for the Student-t kernel only");
  return (dist.nu() + dist.dim()) / (dist.nu() + mahalanobis(dist, x));
}

/// Law of x[free] given x[given] = value, where free is the complement of
/// `given` in increasing order.
inline EllipticalJoint conditional(const EllipticalJoint& joint, const IndexList& given,
                                   const Vector& value) {
  const int r = joint.dim();
  detail::check_indices(r, given);
  if (static_cast<int>(given.size()) >= r)
    throw ValidationError("conditioning set must be a proper subset");
  if (value.size() != static_cast<Eigen::Index>(given.size()) || !value.allFinite())
    throw ValidationError("conditioning value must be finite with one entry per given index");
  const IndexList free = linalg::complement(r, given);
  const Matrix& om = joint.omega();
  const Matrix ogg = linalg::take(om, given, given);
  const Matrix ofg = linalg::take(om, free, given);
  Eigen::LLT<Matrix> llt(ogg);
  if (llt.info() != Eigen::Success) throw NumericalError("conditioning block is singular");
  const Vector dev = value - linalg::take(joint.xi(), given);
  const Vector w = llt.solve(dev);
  Vector m = linalg::take(joint.xi(), free) + ofg * w;
  Matrix s = linalg::take(om, free, free) - ofg * llt.solve(ofg.transpose());
  s = linalg::symmetrize(s);
  if (!joint.is_t()) return EllipticalJoint::normal(std::move(m), std::move(s));
  const double delta = dev.dot(w);
  const double r2 = static_cast<double>(given.size());
  const double nu = joint.nu();
  s *= (nu + delta) / (nu + r2);
  return EllipticalJoint::student_t(nu + r2, std::move(m), std::move(s));
}

inline double log_density(const EllipticalJoint& dist, const Vector& x) {
  const double delta = mahalanobis(dist, x);
  const double r = dist.dim();
  if (!dist.is_t())
    return -0.5 * r * std::log(2.0 * std::numbers::pi) - 0.5 * dist.log_det() - 0.5 * delta;
  const double nu = dist.nu();
  return std::lgamma(0.5 * (nu + r)) - std::lgamma(0.5 * nu) - 0.5 * r * std::log(nu * std::numbers::pi) -
         0.5 * dist.log_det() - 0.5 * (nu + r) * std::log1p(delta / nu);
}

inline double density(const EllipticalJoint& dist, const Vector& x) {
  return std::exp(log_density(dist, x));
}

}  // namespace tse
