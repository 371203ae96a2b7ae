#pragma once

// Selection-elliptical laws Y = X₂ | X₁ ∈ C for a joint (X₁, X₂) and their
// unified skew parametrizations (SUN/ESN/SN and SUT/EST/ST).

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>

#include "tse/box.hpp"
#include "tse/elliptical.hpp"
#include "tse/rectangle_prob.hpp"
#include "tse/truncated.hpp"

namespace tse {

/// Joint over q selection coordinates followed by p outcome coordinates.
struct SelectionSpec {
  EllipticalJoint joint;
  int q = 0;
  int p = 1;
  TruncationBox selection_box;

  SelectionSpec(EllipticalJoint j, int q_, TruncationBox sel)
      : joint(std::move(j)), q(q_), p(joint.dim() - q_), selection_box(std::move(sel)) {
    if (q < 0 || p < 1) throw ValidationError("selection spec needs q >= 0 and p >= 1");
    if (selection_box.dim() != q) throw ValidationError("selection box must have q coordinates");
  }

  /// Symmetric law with no selection (q = 0).
  static SelectionSpec symmetric(EllipticalJoint j) {
    return {std::move(j), 0, TruncationBox(Vector(0), Vector(0))};
  }

  IndexList selection_idx() const { return linalg::iota(q); }
  IndexList outcome_idx() const { return linalg::iota(p, q); }
  const Kernel& kernel() const { return joint.kernel(); }

  EllipticalJoint outcome_marginal() const { return marginal(joint, outcome_idx()); }
  EllipticalJoint selection_marginal() const { return marginal(joint, selection_idx()); }

  /// Box for the augmented (q+p)-dimensional problem.
  TruncationBox augment(const TruncationBox& outcome_box) const {
    if (outcome_box.dim() != p) throw ValidationError("outcome box must have p coordinates");
    return TruncationBox::concat(selection_box, outcome_box);
  }
};

/// (μ, Σ, Λ, τ, Ψ) with Λ of size p×q; the kernel carries ν.
struct SutParams {
  Kernel kernel;
  Vector mu;
  Matrix sigma;
  Matrix lambda;
  Vector tau;
  Matrix psi;

  int p() const { return static_cast<int>(mu.size()); }
  int q() const { return static_cast<int>(tau.size()); }

  void validate() const {
    const int pp = p(), qq = q();
    if (pp < 1) throw ValidationError("location must have at least one entry");
    if (qq < 1) throw ValidationError("extension vector must have at least one entry");
    if (sigma.rows() != pp || sigma.cols() != pp) throw ValidationError("Sigma must be p x p");
    if (lambda.rows() != pp || lambda.cols() != qq) throw ValidationError("Lambda must be p x q");
    if (psi.rows() != qq || psi.cols() != qq) throw ValidationError("Psi must be q x q");
    if (!mu.allFinite() || !sigma.allFinite() || !lambda.allFinite() || !tau.allFinite() || !psi.allFinite())
      throw ValidationError("parameters must be finite");
    if (!linalg::is_symmetric(sigma)) throw ValidationError("Sigma is not symmetric");
    if (!linalg::is_symmetric(psi)) throw ValidationError("Psi is not symmetric");
    for (int i = 0; i < qq; ++i)
      if (std::abs(psi(i, i) - 1.0) > 1e-12) throw ValidationError("Psi must have unit diagonal");
    linalg::cholesky_lower(sigma, "Sigma");
    linalg::cholesky_lower(psi, "Psi");
  }

  static SutParams sut(Vector mu, Matrix sigma, Matrix lambda, Vector tau, Matrix psi, double nu) {
    SutParams s{Kernel::student_t(nu), std::move(mu), std::move(sigma), std::move(lambda), std::move(tau),
                std::move(psi)};
    s.validate();
    return s;
  }
  static SutParams sun(Vector mu, Matrix sigma, Matrix lambda, Vector tau, Matrix psi) {
    SutParams s{Kernel::normal(), std::move(mu), std::move(sigma), std::move(lambda), std::move(tau),
                std::move(psi)};
    s.validate();
    return s;
  }
  static SutParams est(Vector mu, Matrix sigma, const Vector& lambda, double tau, double nu) {
    return sut(std::move(mu), std::move(sigma), lambda, Vector::Constant(1, tau), Matrix::Identity(1, 1), nu);
  }
  static SutParams st(Vector mu, Matrix sigma, const Vector& lambda, double nu) {
    return est(std::move(mu), std::move(sigma), lambda, 0.0, nu);
  }
  static SutParams esn(Vector mu, Matrix sigma, const Vector& lambda, double tau) {
    return sun(std::move(mu), std::move(sigma), lambda, Vector::Constant(1, tau), Matrix::Identity(1, 1));
  }
  static SutParams sn(Vector mu, Matrix sigma, const Vector& lambda) {
    return esn(std::move(mu), std::move(sigma), lambda, 0.0);
  }

  Matrix omega11() const { return psi + lambda.transpose() * lambda; }
  /// Ω₂₁ = Σ^{1/2} Λ with the symmetric square root.
  Matrix omega21() const { return linalg::sym_sqrt(sigma) * lambda; }
};

inline SelectionSpec build_selection(const SutParams& prm) {
  prm.validate();
  const int p = prm.p(), q = prm.q();
  Vector xi(q + p);
  xi << prm.tau, prm.mu;
  Matrix om(q + p, q + p);
  const Matrix o21 = prm.omega21();
  om.topLeftCorner(q, q) = prm.omega11();
  om.bottomLeftCorner(p, q) = o21;
  om.topRightCorner(q, p) = o21.transpose();
  om.bottomRightCorner(p, p) = prm.sigma;
  EllipticalJoint joint(prm.kernel, std::move(xi), linalg::symmetrize(om));
  return {std::move(joint), q, TruncationBox::lower_bounded(Vector::Zero(q))};
}

/// P(X₁ ∈ C), integrated explicitly over the selection event.
inline ProbResult selection_prob(const SelectionSpec& spec, const RectangleProbSettings& settings = {}) {
  if (spec.q == 0) return {1.0, 0.0};
  return rectangle_prob(spec.selection_marginal(), spec.selection_box, settings);
}

/// f_Y(y) = f_{X₂}(y) P(X₁ ∈ C | X₂ = y) / P(X₁ ∈ C).
inline double se_pdf(const SelectionSpec& spec, const Vector& y, const RectangleProbSettings& settings = {}) {
  if (y.size() != spec.p) throw ValidationError("se_pdf: point has wrong dimension");
  const double f = density(spec.outcome_marginal(), y);
  if (spec.q == 0) return f;
  const ProbResult den = selection_prob(spec, settings);
  if (!(den.value > 0.0)) throw NumericalError("selection probability is zero");
  const EllipticalJoint cond = conditional(spec.joint, spec.outcome_idx(), y);
  const ProbResult num = rectangle_prob(cond, spec.selection_box, settings);
  return f * num.value / den.value;
}

namespace detail {

/// P(Z ≤ x) for Z ~ kernel(0, scale).
inline double lower_orthant(const Kernel& k, const Vector& x, const Matrix& scale,
                            const RectangleProbSettings& settings) {
  const EllipticalJoint z(k, Vector::Zero(x.size()), scale);
  return rectangle_prob(z, TruncationBox(Vector::Constant(x.size(), -kInf), x), settings).value;
}

inline Vector standardized_shift(const SutParams& prm, const Vector& y) {
  const Matrix root = linalg::sym_sqrt(prm.sigma);
  return prm.tau + prm.lambda.transpose() * root.llt().solve(y - prm.mu);
}

}  // namespace detail

/// SUT density in the (μ, Σ, Λ, τ, Ψ, ν) form; the SUN form for the normal
/// kernel.
inline double sut_pdf(const SutParams& prm, const Vector& y, const RectangleProbSettings& settings = {}) {
  prm.validate();
  if (y.size() != prm.p()) throw ValidationError("sut_pdf: point has wrong dimension");
  const EllipticalJoint base(prm.kernel, prm.mu, prm.sigma);
  Vector arg = detail::standardized_shift(prm, y);
  Kernel num_k = prm.kernel;
  if (prm.kernel.is_t()) {
    arg *= std::sqrt(nu_factor(base, y));
    num_k = Kernel::student_t(prm.kernel.nu + prm.p());
  }
  const double num = detail::lower_orthant(num_k, arg, prm.psi, settings);
  const double den = detail::lower_orthant(prm.kernel, prm.tau, prm.omega11(), settings);
  return density(base, y) * num / den;
}

inline double sun_pdf(const SutParams& prm, const Vector& y, const RectangleProbSettings& settings = {}) {
  if (prm.kernel.is_t()) throw ValidationError("sun_pdf needs the normal kernel");
  return sut_pdf(prm, y, settings);
}

/// Extended skew-t (or skew-normal) density for q = 1 using univariate cdfs.
inline double est_pdf(const SutParams& prm, const Vector& y) {
  prm.validate();
  if (prm.q() != 1) throw ValidationError("est_pdf needs q = 1");
  if (y.size() != prm.p()) throw ValidationError("est_pdf: point has wrong dimension");
  const EllipticalJoint base(prm.kernel, prm.mu, prm.sigma);
  const Vector lam = prm.lambda.col(0);
  const double tau = prm.tau(0);
  const double tau_tilde = tau / std::sqrt(1.0 + lam.squaredNorm());
  double arg = detail::standardized_shift(prm, y)(0);
  if (!prm.kernel.is_t()) return density(base, y) * uni::norm_cdf(arg) / uni::norm_cdf(tau_tilde);
  arg *= std::sqrt(nu_factor(base, y));
  const double nu = prm.kernel.nu;
  return density(base, y) * uni::t_cdf(arg, nu + prm.p()) / uni::t_cdf(tau_tilde, nu);
}

/// Skew-t (or skew-normal) density: 2 f_p(y) F₁(λᵀΣ^{-1/2}(y−μ)·ν(y)).
inline double st_pdf(const SutParams& prm, const Vector& y) {
  prm.validate();
  if (prm.q() != 1) throw ValidationError("st_pdf needs q = 1");
  if (prm.tau(0) != 0.0) throw ValidationError("st_pdf needs tau = 0");
  const EllipticalJoint base(prm.kernel, prm.mu, prm.sigma);
  const Matrix root = linalg::sym_sqrt(prm.sigma);
  double arg = prm.lambda.col(0).dot(root.llt().solve(y - prm.mu));
  if (!prm.kernel.is_t()) return 2.0 * density(base, y) * uni::norm_cdf(arg);
  arg *= std::sqrt(nu_factor(base, y));
  return 2.0 * density(base, y) * uni::t_cdf(arg, prm.kernel.nu + prm.p());
}

/// Limit of the SUT law as τ → −∞: t_p(γ, ω_τΓ, ν+q), or N_p(γ, Γ).
struct LimitingTParams {
  Kernel kernel;
  Vector gamma;
  Matrix Gamma;
  double omega_tau = 1.0;
  double df_out = kInf;
  /// q = 1 only: τ/√(1+λᵀλ) and Σ^{1/2}λ/√(1+λᵀλ).
  std::optional<double> tau_tilde;
  std::optional<Vector> delta;

  EllipticalJoint law() const {
    if (!kernel.is_t()) return EllipticalJoint::normal(gamma, Gamma);
    return EllipticalJoint::student_t(df_out, gamma, omega_tau * Gamma);
  }
};

inline LimitingTParams limiting_t(const SutParams& prm) {
  prm.validate();
  const Matrix o11 = prm.omega11();
  const Matrix o21 = prm.omega21();
  const Eigen::LLT<Matrix> llt(o11);
  LimitingTParams out;
  out.kernel = prm.kernel;
  out.gamma = prm.mu - o21 * llt.solve(prm.tau);
  out.Gamma = linalg::symmetrize(prm.sigma - o21 * llt.solve(o21.transpose()));
  if (prm.kernel.is_t()) {
    const double nu = prm.kernel.nu;
    out.omega_tau = (nu + prm.tau.dot(llt.solve(prm.tau))) / (nu + prm.q());
    out.df_out = nu + prm.q();
  }
  if (prm.q() == 1) {
    const Vector lam = prm.lambda.col(0);
    const double s = std::sqrt(1.0 + lam.squaredNorm());
    out.tau_tilde = prm.tau(0) / s;
    out.delta = linalg::sym_sqrt(prm.sigma) * lam / s;
  }
  return out;
}

/// Existence of E[Y^k | a ≤ Y ≤ b] under the SUT law; the selection block
/// carries no order and never has a finite pair.
inline ExistenceVerdict sut_existence(const SutParams& prm, const TruncationBox& box, const MomentOrder& order) {
  if (box.dim() != prm.p()) throw ValidationError("box must have p coordinates");
  return existence_check(prm.kernel, box, order);
}

/// Law of A Y + b for invertible A (p×p).
inline SelectionSpec affine(const SelectionSpec& spec, const Matrix& a, const Vector& b) {
  const int p = spec.p, q = spec.q;
  if (a.rows() != p || a.cols() != p || b.size() != p) throw ValidationError("affine map has wrong shape");
  Eigen::FullPivLU<Matrix> lu(a);
  if (!lu.isInvertible()) throw ValidationError("affine map must be invertible");
  Matrix t = Matrix::Identity(q + p, q + p);
  t.bottomRightCorner(p, p) = a;
  Vector shift = Vector::Zero(q + p);
  shift.tail(p) = b;
  Vector xi = t * spec.joint.xi() + shift;
  Matrix om = linalg::symmetrize(t * spec.joint.omega() * t.transpose());
  return {spec.joint.with(std::move(xi), std::move(om)), q, spec.selection_box};
}

/// Mean and covariance of Y | a ≤ Y ≤ b via the augmented joint with
/// α = (c, a), β = (d, b). prob_mass is P(a ≤ Y ≤ b).
inline MomentReport tse_mean_cov(const SelectionSpec& spec, const TruncationBox& box,
                                 MomentRequest request = MomentRequest::MeanAndCov,
                                 const RectangleProbSettings& settings = {}) {
  const TruncationBox aug = spec.augment(box);
  MomentReport r = truncated_mean_cov(spec.joint, aug, request, settings, spec.outcome_idx());
  const ProbResult sel = selection_prob(spec, settings);
  if (sel.value > 0.0) {
    r.prob_error = r.prob_error / sel.value + r.prob_mass * sel.error / (sel.value * sel.value);
    r.prob_mass = std::min(1.0, r.prob_mass / sel.value);
  }
  return r;
}

}  // namespace tse
