#pragma once

// Expectations of the form E[g(Y) f_{X₁}(0 | X₂=Y) / P(X₁ > 0 | X₂=Y)] for a
// truncated selection law with C = [0, ∞)^q, as they appear in E-steps of
// interval-censored models. They reduce to truncated moments of
// W₀ = X₂ | X₁ = 0.

#include <cmath>
#include <optional>
#include <string>

#include "tse/selection.hpp"
#include "tse/truncated.hpp"

namespace tse {

enum class GKind { One, First, Second };

/// g(y) = 1, y, or y yᵀ.
struct GSpec {
  GKind kind = GKind::One;

  static GKind parse(const std::string& s) {
    if (s == "1" || s == "one") return GKind::One;
    if (s == "y" || s == "first") return GKind::First;
    if (s == "yy" || s == "second") return GKind::Second;
    throw ValidationError("unknown g kind '" + s + "' (expected 1, y or yy)");
  }
};

struct CensoredFactor {
  double eta = 0.0;  ///< f_{X₁}(0) / P(X₁ ≥ 0)
  double log_eta = 0.0;
  double prob_ratio = 1.0;  ///< P(a ≤ W₀ ≤ b) / P(a ≤ Y₀ ≤ b)
  double log_prob_ratio = 0.0;
  double prob_w0 = 1.0;
  double prob_y0 = 1.0;
  std::optional<EllipticalJoint> limiting;  ///< W₀; absent when no outcome is left
  TruncationBox box;                        ///< W = W₀ | box

  double scale() const { return std::exp(log_eta + log_prob_ratio); }
};

namespace detail {

inline void check_positive_selection(const SelectionSpec& spec) {
  if (spec.q < 1) throw ValidationError("censored factors need q >= 1");
  for (int i = 0; i < spec.q; ++i)
    if (spec.selection_box.lower(i) != 0.0 || spec.selection_box.upper(i) != kInf)
      throw ValidationError("censored factors need the selection set [0, inf)^q");
}

inline double log_or_throw(double p, const char* what) {
  if (!(p > 0.0)) throw NumericalError(std::string(what) + " underflows to zero");
  return std::log(p);
}

}  // namespace detail

/// η, the probability ratio, and the law of W for a selection spec with
/// C = [0, ∞)^q.
inline CensoredFactor censored_factor(const SelectionSpec& spec, const TruncationBox& box,
                                      const RectangleProbSettings& settings = {}) {
  detail::check_positive_selection(spec);
  if (box.dim() != spec.p) throw ValidationError("box must have p coordinates");
  const EllipticalJoint x1 = spec.selection_marginal();
  const ProbResult sel = rectangle_prob(x1, spec.selection_box, settings);
  CensoredFactor f;
  const double log_sel = detail::log_or_throw(sel.value, "P(X1 >= 0)");
  f.log_eta = log_density(x1, Vector::Zero(spec.q)) - log_sel;
  f.eta = std::exp(f.log_eta);
  f.box = box;
  f.limiting = conditional(spec.joint, spec.selection_idx(), Vector::Zero(spec.q));
  f.prob_w0 = rectangle_prob(*f.limiting, box, settings).value;
  const double joint_p = rectangle_prob(spec.joint, spec.augment(box), settings).value;
  f.prob_y0 = joint_p / sel.value;
  f.log_prob_ratio = detail::log_or_throw(f.prob_w0, "P(a <= W0 <= b)") -
                     (detail::log_or_throw(joint_p, "P(X1 >= 0, a <= X2 <= b)") - log_sel);
  f.prob_ratio = std::exp(f.log_prob_ratio);
  return f;
}

inline CensoredFactor censored_factor(const SutParams& prm, const TruncationBox& box,
                                      const RectangleProbSettings& settings = {}) {
  return censored_factor(build_selection(prm), box, settings);
}

/// Same factor for Y₂ given Y₁ = y1, where Y₁ collects the `observed`
/// outcome coordinates (0-based within the outcome block).
inline CensoredFactor censored_factor_conditional(const SelectionSpec& spec, const TruncationBox& box,
                                                  const IndexList& observed, const Vector& y1,
                                                  const RectangleProbSettings& settings = {}) {
  detail::check_positive_selection(spec);
  if (box.dim() != spec.p) throw ValidationError("box must have p coordinates");
  detail::check_indices(spec.p, observed, true);
  if (y1.size() != static_cast<Eigen::Index>(observed.size()))
    throw ValidationError("one observed value per observed coordinate is required");
  if (observed.empty()) return censored_factor(spec, box, settings);
  for (std::size_t j = 0; j < observed.size(); ++j) {
    const int i = observed[j];
    if (y1(j) < box.lower(i) || y1(j) > box.upper(i))
      throw ValidationError("observed value lies outside its truncation interval");
  }
  IndexList aug_obs;
  for (int i : observed) aug_obs.push_back(spec.q + i);
  const EllipticalJoint cond = conditional(spec.joint, aug_obs, y1);  // (X₁, X₂₂) | X₂₁ = y1
  const IndexList rest = linalg::complement(spec.p, observed);
  if (rest.empty()) {
    const ProbResult sel = rectangle_prob(cond, spec.selection_box, settings);
    CensoredFactor f;
    f.log_eta = log_density(cond, Vector::Zero(spec.q)) - detail::log_or_throw(sel.value, "P(X1* >= 0)");
    f.eta = std::exp(f.log_eta);
    f.box = TruncationBox(Vector(0), Vector(0));
    return f;
  }
  const SelectionSpec star(cond, spec.q, spec.selection_box);
  return censored_factor(star, box.slice(rest), settings);
}

/// E[g(W)] for the truncated limiting law.
inline Matrix limiting_expectation(const CensoredFactor& f, GKind g, const RectangleProbSettings& settings = {}) {
  if (g == GKind::One || !f.limiting) return Matrix::Constant(1, 1, 1.0);
  const MomentRequest req = g == GKind::First ? MomentRequest::Mean : MomentRequest::MeanAndCov;
  const MomentReport r = truncated_mean_cov(*f.limiting, f.box, req, settings);
  if (g == GKind::First) return r.require_mean();
  return r.require_second_moment();
}

/// Right-hand side: prob_ratio · η · E[g(W)].
inline Matrix censored_expectation(const CensoredFactor& f, GKind g, const RectangleProbSettings& settings = {}) {
  return f.scale() * limiting_expectation(f, g, settings);
}

/// f_{X₁}(0 | X₂ = y) / P(X₁ > 0 | X₂ = y), the weight inside the left-hand
/// expectation.
inline double censored_weight(const SelectionSpec& spec, const Vector& y,
                              const RectangleProbSettings& settings = {}) {
  detail::check_positive_selection(spec);
  const EllipticalJoint cond = conditional(spec.joint, spec.outcome_idx(), y);
  const double num = log_density(cond, Vector::Zero(spec.q));
  const double den = rectangle_prob(cond, spec.selection_box, settings).value;
  return std::exp(num - detail::log_or_throw(den, "P(X1 > 0 | X2 = y)"));
}

/// The standardized ratio f_q(m ν(y); Ψ, ν+p) / F_q(m ν(y); Ψ, ν+p) with
/// m = τ + ΛᵀΣ^{-1/2}(y − μ). For the t kernel the conditional density of X₁
/// at 0 is ν(y)^q times the numerator, so censored_weight equals
/// ν(y)^q times this ratio; for the normal kernel the two coincide.
inline double sut_standardized_ratio(const SutParams& prm, const Vector& y,
                                     const RectangleProbSettings& settings = {}) {
  prm.validate();
  Vector m = detail::standardized_shift(prm, y);
  Kernel k = prm.kernel;
  if (k.is_t()) {
    m *= std::sqrt(nu_factor(EllipticalJoint(prm.kernel, prm.mu, prm.sigma), y));
    k = Kernel::student_t(prm.kernel.nu + prm.p());
  }
  const EllipticalJoint z(k, Vector::Zero(prm.q()), prm.psi);
  const double num = log_density(z, m);
  const double den = rectangle_prob(z, TruncationBox(Vector::Constant(prm.q(), -kInf), m), settings).value;
  return std::exp(num - detail::log_or_throw(den, "selection cdf"));
}

}  // namespace tse
