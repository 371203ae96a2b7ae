#pragma once

// Tail conditional expectations for selection-elliptical laws: TCE of a
// univariate law, MTCE, and the TCE of a sum split into per-asset parts.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>

#include <boost/math/tools/roots.hpp>

#include "tse/selection.hpp"
#include "tse/truncated.hpp"

namespace tse {

/// Law of S = 1ᵀY for a q = 1 portfolio in the normalized form
/// (ξ_S, Ω_S) = ((τ̃, μ_S), [[1, Δ_S], [Δ_S, σ²_S]]).
struct SumDistParams {
  Kernel kernel;
  double tau_tilde = 0.0;
  double mu_S = 0.0;
  double sigma2_S = 1.0;
  double Delta_S = 0.0;
  double lambda_S = 0.0;

  double nu() const { return kernel.nu; }
};

struct RiskDecomposition {
  double total = 0.0;    ///< TCE_S(s_α)
  Vector contributions;  ///< sᵢ = E[Yᵢ | S > s_α]
  double E_S1 = 0.0;     ///< E[W₁ | W₁ > 0, W₂ > s_α]; first selection coordinate when q > 1
  double quantile = 0.0;
  double alpha = 0.0;
  std::string method;
};

struct TailExpectation {
  double value = 0.0;
  double quantile = 0.0;
  double alpha = 0.0;
  std::string method;
};

namespace detail {

inline void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("tail level alpha must lie in (0, 1)");
}

inline void check_univariate(const SelectionSpec& spec) {
  if (spec.p != 1) throw ValidationError("a univariate selection law (p = 1) is required");
}

/// Selection joint of (X₁, aᵀX₂).
inline SelectionSpec linear_combination(const SelectionSpec& spec, const Vector& a) {
  const int q = spec.q, p = spec.p;
  Matrix t = Matrix::Zero(q + 1, q + p);
  t.topLeftCorner(q, q).setIdentity();
  t.bottomRightCorner(1, p) = a.transpose();
  const Vector xi = t * spec.joint.xi();
  const Matrix om = linalg::symmetrize(t * spec.joint.omega() * t.transpose());
  return {EllipticalJoint(spec.kernel(), xi, om), q, spec.selection_box};
}

}  // namespace detail

/// P(Y > y) for a univariate selection law.
inline ProbResult se_survival(const SelectionSpec& spec, double y, const RectangleProbSettings& settings = {}) {
  detail::check_univariate(spec);
  const TruncationBox tail(Vector::Constant(1, y), Vector::Constant(1, kInf));
  const ProbResult joint = rectangle_prob(spec.joint, spec.augment(tail), settings);
  const ProbResult sel = selection_prob(spec, settings);
  if (!(sel.value > 0.0)) throw NumericalError("selection probability underflows");
  return {std::min(1.0, joint.value / sel.value),
          joint.error / sel.value + joint.value * sel.error / (sel.value * sel.value)};
}

inline double se_cdf(const SelectionSpec& spec, double y, const RectangleProbSettings& settings = {}) {
  return 1.0 - se_survival(spec, y, settings).value;
}

/// y_α with P(Y > y_α) = α.
inline double quantile_upper(const SelectionSpec& spec, double alpha, const RectangleProbSettings& settings = {}) {
  detail::check_univariate(spec);
  detail::check_alpha(alpha);
  const EllipticalJoint y = spec.outcome_marginal();
  const double loc = y.xi()(0);
  const double scale = std::sqrt(y.omega()(0, 0));
  constexpr double kMaxScales = 50.0;
  auto f = [&](double x) { return se_survival(spec, x, settings).value - alpha; };

  const char* fail = "quantile could not be bracketed within 50 scale units";
  double lo = loc - scale, hi = loc + scale;
  double flo = f(lo), fhi = f(hi);
  for (double w = 1.0; flo < 0.0;) {
    if (w >= kMaxScales) throw NumericalError(fail);
    hi = lo;
    fhi = flo;
    w = std::min(2.0 * w, kMaxScales);
    lo = loc - w * scale;
    flo = f(lo);
  }
  for (double w = 1.0; fhi > 0.0;) {
    if (w >= kMaxScales) throw NumericalError(fail);
    lo = hi;
    flo = fhi;
    w = std::min(2.0 * w, kMaxScales);
    hi = loc + w * scale;
    fhi = f(hi);
  }
  if (flo == 0.0) return lo;
  if (fhi == 0.0) return hi;
  std::uintmax_t iters = 200;
  const auto tol = [](double a, double b) { return std::abs(b - a) <= 1e-10 * std::max(1.0, std::abs(a)); };
  const auto [a, b] = boost::math::tools::toms748_solve(f, lo, hi, flo, fhi, tol, iters);
  return 0.5 * (a + b);
}

/// E[Y | Y > y_α] for a univariate selection law.
inline TailExpectation tce(const SelectionSpec& spec, double alpha, const RectangleProbSettings& settings = {}) {
  const double y = quantile_upper(spec, alpha, settings);
  const TruncationBox tail(Vector::Constant(1, y), Vector::Constant(1, kInf));
  const MomentReport r = tse_mean_cov(spec, tail, MomentRequest::Mean, settings);
  return {r.require_mean()(0), y, alpha, r.method};
}

/// E[Y | Y > y_α] coordinatewise; -inf entries leave a coordinate free.
inline MomentReport mtce(const SelectionSpec& spec, const Vector& y_alpha, const RectangleProbSettings& settings = {}) {
  if (y_alpha.size() != spec.p) throw ValidationError("quantile vector must have p entries");
  for (Eigen::Index i = 0; i < y_alpha.size(); ++i)
    if (std::isnan(y_alpha(i)) || y_alpha(i) == kInf) throw ValidationError("quantile entries must be < inf");
  return tse_mean_cov(spec, TruncationBox::lower_bounded(y_alpha), MomentRequest::Mean, settings);
}

/// Univariate selection law of the i-th outcome coordinate.
inline SelectionSpec outcome_component(const SelectionSpec& spec, int i) {
  if (i < 0 || i >= spec.p) throw ValidationError("outcome index out of range");
  IndexList keep = spec.selection_idx();
  keep.push_back(spec.q + i);
  return {marginal(spec.joint, keep), spec.q, spec.selection_box};
}

/// Per-coordinate upper quantiles at a common level.
inline Vector marginal_quantiles(const SelectionSpec& spec, double alpha, const RectangleProbSettings& settings = {}) {
  Vector out(spec.p);
  for (int i = 0; i < spec.p; ++i) out(i) = quantile_upper(outcome_component(spec, i), alpha, settings);
  return out;
}

/// Law of the sum for a q = 1 portfolio.
inline SumDistParams sum_params(const SutParams& prm) {
  prm.validate();
  if (prm.q() != 1) throw ValidationError("the sum law is defined for q = 1 portfolios");
  const Vector lam = prm.lambda.col(0);
  const double s = std::sqrt(1.0 + lam.squaredNorm());
  const Vector delta = linalg::sym_sqrt(prm.sigma) * lam / s;
  SumDistParams out;
  out.kernel = prm.kernel;
  out.tau_tilde = prm.tau(0) / s;
  out.mu_S = prm.mu.sum();
  out.sigma2_S = prm.sigma.sum();
  out.Delta_S = delta.sum();
  const double rest = out.sigma2_S - out.Delta_S * out.Delta_S;
  if (!(rest > 0.0)) throw NumericalError("sigma2_S - Delta_S^2 must be positive");
  out.lambda_S = out.Delta_S / std::sqrt(rest);
  return out;
}

/// Univariate selection law of S built from SumDistParams.
inline SelectionSpec sum_law(const SumDistParams& s) {
  Vector xi(2);
  xi << s.tau_tilde, s.mu_S;
  Matrix om(2, 2);
  om << 1.0, s.Delta_S, s.Delta_S, s.sigma2_S;
  return {EllipticalJoint(s.kernel, xi, om), 1, TruncationBox::lower_bounded(Vector::Zero(1))};
}

/// TCE of S = 1ᵀY with the allocation s = ξ₂ + Ω_{2S} Ω_S⁻¹ (E_S − ξ_S).
/// For q = 1 the selection coordinate is first rescaled to unit dispersion,
/// so E_S1 refers to the normalized W₁.
inline RiskDecomposition tce_sum_decomposed(const SelectionSpec& spec, double alpha,
                                            const RectangleProbSettings& settings = {}) {
  detail::check_alpha(alpha);
  const int q = spec.q, p = spec.p;
  SelectionSpec work = spec;
  if (q == 1) {
    const double s = std::sqrt(spec.joint.omega()(0, 0));
    Matrix t = Matrix::Identity(1 + p, 1 + p);
    t(0, 0) = 1.0 / s;
    Vector xi = t * spec.joint.xi();
    Matrix om = linalg::symmetrize(t * spec.joint.omega() * t.transpose());
    work = SelectionSpec(spec.joint.with(std::move(xi), std::move(om)), q,
                         TruncationBox(spec.selection_box.lower() / s, spec.selection_box.upper() / s));
  }
  const SelectionSpec sum = detail::linear_combination(work, Vector::Ones(p));
  RiskDecomposition out;
  out.alpha = alpha;
  out.quantile = quantile_upper(sum, alpha, settings);
  const TruncationBox tail(Vector::Constant(1, out.quantile), Vector::Constant(1, kInf));
  const MomentReport es = truncated_mean_cov(sum.joint, sum.augment(tail), MomentRequest::Mean, settings);
  const Vector& e_s = es.require_mean();
  out.method = es.method;
  out.total = e_s(q);
  out.E_S1 = q > 0 ? e_s(0) : 0.0;

  const Matrix& om = work.joint.omega();
  Matrix o2s(p, q + 1);
  o2s.leftCols(q) = om.block(q, 0, p, q);
  o2s.col(q) = om.bottomRightCorner(p, p) * Vector::Ones(p);
  const Eigen::LLT<Matrix> llt(sum.joint.omega());
  out.contributions = work.joint.xi().tail(p) + o2s * llt.solve(e_s - sum.joint.xi());
  return out;
}

inline RiskDecomposition tce_sum_decomposed(const SutParams& prm, double alpha,
                                            const RectangleProbSettings& settings = {}) {
  prm.validate();
  if (prm.q() != 1) throw ValidationError("portfolio decomposition expects a q = 1 (ST/EST/SN/ESN) law");
  return tce_sum_decomposed(build_selection(prm), alpha, settings);
}

}  // namespace tse
