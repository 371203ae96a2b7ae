#pragma once

// Moments of rectangle-truncated multivariate normal and Student-t laws.
//
// First and second moments come from boundary (face) identities: integrating
// the gradient of the density over the box turns each moment into face
// integrals, which are lower-dimensional rectangle probabilities (and, for
// second moments, lower-dimensional first moments). Arbitrary normal product
// moments use the dimension recursion of Kan and Robotti.

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <cmath>
#include <cstring>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tse/box.hpp"
#include "tse/elliptical.hpp"
#include "tse/rectangle_prob.hpp"

namespace tse {

inline constexpr int kDefaultMaxOrder = 8;
/// Box probabilities below this are treated as underflowed.
inline constexpr double kUnderflowProb = 1e-250;

/// Exponent vector k of the product moment E[x₁^k₁ ⋯ x_r^k_r].
struct MomentOrder {
  std::vector<int> k;

  int total() const {
    int s = 0;
    for (int v : k) s += v;
    return s;
  }
  int dim() const { return static_cast<int>(k.size()); }

  void validate(int dim, int max_order = kDefaultMaxOrder) const {
    if (static_cast<int>(k.size()) != dim) throw ValidationError("moment order has wrong length");
    for (int v : k)
      if (v < 0) throw ValidationError("moment order entries must be nonnegative");
    if (total() > max_order)
      throw ValidationError("moment order " + std::to_string(total()) + " exceeds the limit " +
                            std::to_string(max_order));
  }

  static MomentOrder zero(int dim) { return {std::vector<int>(static_cast<std::size_t>(dim), 0)}; }
  static MomentOrder unit(int dim, int i) {
    MomentOrder o = zero(dim);
    o.k[static_cast<std::size_t>(i)] = 1;
    return o;
  }
};

enum class MomentRequest {
  Mean,        ///< mean required; error if it does not exist
  MeanAndCov,  ///< mean and covariance required
  Available,   ///< whatever exists
};

struct MomentReport {
  double prob_mass = 0.0;
  double prob_error = 0.0;
  std::optional<Vector> mean;
  std::optional<Matrix> second_moment;
  std::optional<Matrix> covariance;
  bool mean_exists = true;
  bool second_exists = true;
  std::string method;
  std::vector<std::string> notes;

  /// True when `path` is the top-level method or was used in a sub-block.
  bool used(std::string_view path) const {
    if (method == path) return true;
    for (const auto& n : notes)
      if (n.find(path) != std::string::npos) return true;
    return false;
  }

  const Vector& require_mean() const {
    if (!mean) throw NonexistenceError("mean does not exist for this truncation");
    return *mean;
  }
  const Matrix& require_covariance() const {
    if (!covariance) throw NonexistenceError("covariance does not exist for this truncation");
    return *covariance;
  }
  const Matrix& require_second_moment() const {
    if (!second_moment) throw NonexistenceError("second moments do not exist for this truncation");
    return *second_moment;
  }
};

struct Omega12Constant {
  double value = 1.0;
};

struct ExistenceVerdict {
  bool exists = true;
  int p1 = 0;              ///< coordinates with both limits finite
  int unbounded_order = 0; ///< order carried by coordinates with an infinite limit
};

/// Student-t moment existence: the order on coordinates with an infinite
/// limit must be strictly below ν + p₁. Always true for the normal kernel.
inline ExistenceVerdict existence_check(const Kernel& kernel, const TruncationBox& box,
                                        const MomentOrder& order) {
  if (order.dim() != box.dim()) throw ValidationError("moment order and box dimensions differ");
  ExistenceVerdict v;
  v.p1 = box.count_finite_pairs();
  for (int i = 0; i < box.dim(); ++i)
    if (!box.finite_pair(i)) v.unbounded_order += order.k[static_cast<std::size_t>(i)];
  if (kernel.is_t()) v.exists = v.unbounded_order == 0 || v.unbounded_order < kernel.nu + v.p1;
  return v;
}

namespace detail {

inline void append_bytes(std::string& s, const void* p, std::size_t n) {
  s.append(static_cast<const char*>(p), n);
}

inline std::string law_key(const EllipticalJoint& law, const TruncationBox& box) {
  std::string s;
  const double nu = law.is_t() ? law.nu() : -1.0;
  append_bytes(s, &nu, sizeof nu);
  append_bytes(s, law.xi().data(), sizeof(double) * law.xi().size());
  append_bytes(s, law.omega().data(), sizeof(double) * law.omega().size());
  append_bytes(s, box.lower().data(), sizeof(double) * box.lower().size());
  append_bytes(s, box.upper().data(), sizeof(double) * box.upper().size());
  return s;
}

/// Per-invocation memo of rectangle probabilities.
class ProbCache {
 public:
  explicit ProbCache(RectangleProbSettings settings) : settings_(settings) {}

  ProbResult get(const EllipticalJoint& law, const TruncationBox& box) {
    const std::string key = law_key(law, box);
    auto it = memo_.find(key);
    if (it != memo_.end()) return it->second;
    const ProbResult r = rectangle_prob(law, box, settings_);
    memo_.emplace(key, r);
    return r;
  }

  const RectangleProbSettings& settings() const { return settings_; }

 private:
  RectangleProbSettings settings_;
  std::map<std::string, ProbResult> memo_;
};

inline bool underflowed(const ProbResult& p) {
  return p.value < kUnderflowProb || (p.value == 0.0 && p.error == 0.0);
}

/// One face {x_i = c} of the box: the marginal weight of x_i at c and the law
/// of the remaining coordinates on that face (absent when dim = 1).
struct Face {
  double weight = 0.0;
  std::optional<EllipticalJoint> law;
  TruncationBox box;
};

inline Face make_face(const EllipticalJoint& law, const TruncationBox& box, int i, double c) {
  const double s = std::sqrt(law.omega()(i, i));
  const double z = (c - law.xi()(i)) / s;
  Face f;
  if (law.is_t()) {
    const double nu = law.nu();
    f.weight = uni::t_pdf(z, nu) / s * (nu + z * z) / (nu - 1.0);
  } else {
    f.weight = uni::norm_pdf(z) / s;
  }
  if (law.dim() == 1) return f;
  const IndexList rest = linalg::complement(law.dim(), {i});
  f.box = box.slice(rest);
  EllipticalJoint cond = conditional(law, {i}, Vector::Constant(1, c));
  if (law.is_t()) {
    // conditional() gives df ν+1; the face integral of the t density times
    // (ν+δ)/(ν−1) is a t law with df ν−1 and the same shape.
    const double nu = law.nu();
    cond = EllipticalJoint::student_t(nu - 1.0, cond.xi(), cond.omega() * ((nu + 1.0) / (nu - 1.0)));
  }
  f.law = std::move(cond);
  return f;
}

inline double face_prob(const Face& f, ProbCache& cache) {
  return f.law ? cache.get(*f.law, f.box).value : 1.0;
}

/// L = P(box) and u = ∫_box x f(x) dx. Student-t needs ν > 1.
struct FirstParts {
  ProbResult prob;
  Vector u;
};

inline FirstParts first_parts(const EllipticalJoint& law, const TruncationBox& box, ProbCache& cache) {
  const int d = law.dim();
  FirstParts out;
  out.prob = cache.get(law, box);
  Vector q = Vector::Zero(d);
  for (int i = 0; i < d; ++i) {
    for (int side = 0; side < 2; ++side) {
      const double c = side == 0 ? box.lower(i) : box.upper(i);
      if (std::isinf(c)) continue;
      const Face f = make_face(law, box, i, c);
      const double term = f.weight * face_prob(f, cache);
      q(i) += side == 0 ? term : -term;
    }
  }
  out.u = out.prob.value * law.xi() + law.omega() * q;
  return out;
}

/// ∫_box x xᵀ f(x) dx. Student-t needs ν > 2.
inline Matrix second_parts(const EllipticalJoint& law, const TruncationBox& box, const FirstParts& first,
                           ProbCache& cache) {
  const int d = law.dim();
  double l2 = first.prob.value;
  if (law.is_t()) {
    const double nu = law.nu();
    const EllipticalJoint star =
        EllipticalJoint::student_t(nu - 2.0, law.xi(), law.omega() * (nu / (nu - 2.0)));
    l2 = nu / (nu - 2.0) * cache.get(star, box).value;
  }
  Matrix c = Matrix::Zero(d, d);
  for (int i = 0; i < d; ++i) {
    for (int side = 0; side < 2; ++side) {
      const double lim = side == 0 ? box.lower(i) : box.upper(i);
      if (std::isinf(lim)) continue;
      const double sign = side == 0 ? 1.0 : -1.0;
      const Face f = make_face(law, box, i, lim);
      const double p = face_prob(f, cache);
      c(i, i) += sign * lim * f.weight * p;
      if (!f.law) continue;
      const FirstParts ff = first_parts(*f.law, f.box, cache);
      const IndexList rest = linalg::complement(d, {i});
      for (std::size_t jj = 0; jj < rest.size(); ++jj) c(i, rest[jj]) += sign * f.weight * ff.u(jj);
    }
  }
  Matrix m = law.xi() * first.u.transpose() + law.omega() * (l2 * Matrix::Identity(d, d) + c);
  return linalg::symmetrize(m);
}

/// Kan-Robotti recursion for F_k = ∫_box x^k φ(x; ξ, Ω) dx, memoized per call.
class NormalRecursion {
 public:
  explicit NormalRecursion(ProbCache& cache) : cache_(cache) {}

  double integral(const EllipticalJoint& law, const TruncationBox& box, const std::vector<int>& k) {
    std::string key = law_key(law, box);
    append_bytes(key, k.data(), sizeof(int) * k.size());
    auto it = memo_.find(key);
    if (it != memo_.end()) return it->second;

    const int d = law.dim();
    int i = 0;
    while (i < d && k[static_cast<std::size_t>(i)] == 0) ++i;
    double res;
    if (i == d) {
      res = cache_.get(law, box).value;
    } else {
      std::vector<int> km = k;
      --km[static_cast<std::size_t>(i)];
      res = law.xi()(i) * integral(law, box, km);
      for (int j = 0; j < d; ++j) {
        const double sij = law.omega()(i, j);
        if (sij == 0.0) continue;
        const int kj = km[static_cast<std::size_t>(j)];
        double cj = 0.0;
        if (kj > 0) {
          std::vector<int> kd = km;
          --kd[static_cast<std::size_t>(j)];
          cj += kj * integral(law, box, kd);
        }
        for (int side = 0; side < 2; ++side) {
          const double lim = side == 0 ? box.lower(j) : box.upper(j);
          if (std::isinf(lim)) continue;
          const Face f = make_face(law, box, j, lim);
          double inner = 1.0;
          if (f.law) {
            std::vector<int> kf;
            for (int t = 0; t < d; ++t)
              if (t != j) kf.push_back(km[static_cast<std::size_t>(t)]);
            inner = integral(*f.law, f.box, kf);
          }
          const double term = std::pow(lim, kj) * f.weight * inner;
          cj += side == 0 ? term : -term;
        }
        res += sij * cj;
      }
    }
    memo_.emplace(std::move(key), res);
    return res;
  }

 private:
  ProbCache& cache_;
  std::map<std::string, double> memo_;
};

/// Point of the box closest to ξ in Mahalanobis distance (projected
/// coordinate descent on the convex quadratic).
inline Vector nearest_in_box(const EllipticalJoint& law, const TruncationBox& box) {
  const int d = law.dim();
  const Matrix prec = linalg::chol_solve(law.chol(), Matrix::Identity(d, d));
  Vector x(d);
  for (int i = 0; i < d; ++i) x(i) = std::clamp(law.xi()(i), box.lower(i), box.upper(i));
  for (int sweep = 0; sweep < 10000; ++sweep) {
    double moved = 0.0;
    for (int i = 0; i < d; ++i) {
      double g = 0.0;
      for (int j = 0; j < d; ++j)
        if (j != i) g += prec(i, j) * (x(j) - law.xi()(j));
      const double xi_new = std::clamp(law.xi()(i) - g / prec(i, i), box.lower(i), box.upper(i));
      moved = std::max(moved, std::abs(xi_new - x(i)) / (1.0 + std::abs(x(i))));
      x(i) = xi_new;
    }
    if (moved < 1e-15) break;
  }
  return x;
}

struct Existence {
  bool mean = true;
  bool second = true;
};

/// Existence of the mean vector and second-moment matrix over `target`.
inline Existence target_existence(const Kernel& k, const TruncationBox& box, const IndexList& target) {
  Existence e;
  if (!k.is_t()) return e;
  const int p1 = box.count_finite_pairs();
  bool any_unbounded = false;
  for (int i : target) any_unbounded = any_unbounded || !box.finite_pair(i);
  if (any_unbounded) {
    e.mean = 1.0 < k.nu + p1;
    e.second = 2.0 < k.nu + p1;
  }
  return e;
}

inline MomentReport restrict_report(MomentReport r, const IndexList& target) {
  if (r.mean) r.mean = linalg::take(*r.mean, target);
  if (r.second_moment) r.second_moment = linalg::take(*r.second_moment, target, target);
  if (r.covariance) r.covariance = linalg::take(*r.covariance, target, target);
  return r;
}

inline void finish_cov(MomentReport& r) {
  if (r.mean && r.second_moment)
    r.covariance = linalg::symmetrize(*r.second_moment - *r.mean * r.mean->transpose());
}

inline MomentReport dispatch(const EllipticalJoint& dist, const TruncationBox& box, bool need_second,
                             const IndexList& target, ProbCache& cache);

/// Normal or t face-identity path on the full box. Caller guarantees ν > 1
/// (ν > 2 with need_second) for the t kernel.
inline MomentReport face_identity(const EllipticalJoint& dist, const TruncationBox& box, bool need_second,
                                  ProbCache& cache, const FirstParts& first) {
  MomentReport r;
  r.prob_mass = first.prob.value;
  r.prob_error = first.prob.error;
  r.method = "direct";
  r.mean = first.u / first.prob.value;
  if (need_second) {
    r.second_moment = second_parts(dist, box, first, cache) / first.prob.value;
    finish_cov(r);
  }
  return r;
}

// Standardized width below which a normal component counts as flat across a
// finite pair of limits.
inline constexpr double kFlatWidth = 1e-3;

/// Unnormalized moments (mass l, first u, second m) of a normal component that
/// is nearly flat across every finite pair: those coordinates are treated as
/// independent uniforms and the rest is conditioned on the box midpoint.
/// Face identities lose all precision there (cdf differences of order
/// width/σ). Returns false when the component is not that diffuse.
inline bool flat_component(const EllipticalJoint& law, const TruncationBox& box, bool need_second,
                           const IndexList& target, ProbCache& cache, double& l, Vector& u, Matrix& m) {
  const int d = law.dim();
  IndexList fin, rest;
  for (int i = 0; i < d; ++i) (box.finite_pair(i) ? fin : rest).push_back(i);
  if (fin.empty()) return false;
  for (int i : fin)
    if ((box.upper(i) - box.lower(i)) / std::sqrt(law.omega()(i, i)) > kFlatWidth) return false;
  const int nf = static_cast<int>(fin.size());
  Vector mid(nf), var(nf);
  double vol = 1.0;
  for (int j = 0; j < nf; ++j) {
    const double w = box.upper(fin[j]) - box.lower(fin[j]);
    mid(j) = box.lower(fin[j]) + 0.5 * w;
    var(j) = w * w / 12.0;
    vol *= w;
  }
  l = density(marginal(law, fin), mid) * vol;
  Vector mean(d);
  Matrix cov = Matrix::Zero(d, d);
  for (int j = 0; j < nf; ++j) {
    mean(fin[j]) = mid(j);
    cov(fin[j], fin[j]) = var(j);
  }
  if (!rest.empty()) {
    const EllipticalJoint cond = conditional(law, fin, mid);
    const TruncationBox rb = box.slice(rest);
    l *= cache.get(cond, rb).value;
    const MomentReport sub = dispatch(cond, rb, need_second, linalg::iota(static_cast<int>(rest.size())), cache);
    for (std::size_t i = 0; i < rest.size(); ++i) mean(rest[i]) = (*sub.mean)(i);
    if (need_second) {
      const Matrix obb = linalg::take(law.omega(), fin, fin);
      const Matrix beta = linalg::chol_solve(linalg::cholesky_lower(obb), linalg::take(law.omega(), fin, rest)).transpose();
      const Matrix cross = beta * var.asDiagonal();
      const Matrix cuu = *sub.covariance + cross * beta.transpose();
      for (std::size_t i = 0; i < rest.size(); ++i) {
        for (std::size_t k = 0; k < rest.size(); ++k) cov(rest[i], rest[k]) = cuu(i, k);
        for (int j = 0; j < nf; ++j) cov(rest[i], fin[j]) = cov(fin[j], rest[i]) = cross(i, j);
      }
    }
  }
  u = l * linalg::take(mean, target);
  if (need_second) m = l * linalg::take(Matrix(cov + mean * mean.transpose()), target, target);
  return true;
}

/// Student-t moments as a Gamma(ν/2, ν/2) scale mixture of truncated normal
/// moments; used when ν is too small for the t face identities.
inline MomentReport t_scale_mixture(const EllipticalJoint& dist, const TruncationBox& box, bool need_second,
                                    const IndexList& target, ProbCache& cache) {
  const double nu = dist.nu();
  const int nt = static_cast<int>(target.size());
  double l = 0.0;
  Vector u = Vector::Zero(nt);
  Matrix m = Matrix::Zero(nt, nt);
  using GL = boost::math::quadrature::gauss<double, 8>;
  auto node = [&](double uu, double wt) {
    const double w = boost::math::gamma_p_inv(0.5 * nu, uu) / (0.5 * nu);
    if (!(w > 0.0) || !std::isfinite(w)) return;
    const EllipticalJoint law = EllipticalJoint::normal(dist.xi(), dist.omega() / w);
    double fl = 0.0;
    Vector fu;
    Matrix fm;
    if (flat_component(law, box, need_second, target, cache, fl, fu, fm)) {
      l += wt * fl;
      u += wt * fu;
      if (need_second) m += wt * fm;
      return;
    }
    const FirstParts fp = first_parts(law, box, cache);
    l += wt * fp.prob.value;
    u += wt * linalg::take(fp.u, target);
    if (need_second) m += wt * linalg::take(second_parts(law, box, fp, cache), target, target);
  };
  // Graded panels toward both ends of (0, 1), where the integrand may be singular.
  std::vector<std::pair<double, double>> panels;
  for (int k = 1; k <= 48; ++k) panels.emplace_back(std::ldexp(1.0, -k - 1), std::ldexp(1.0, -k));
  for (int k = 1; k <= 40; ++k) panels.emplace_back(1.0 - std::ldexp(1.0, -k), 1.0 - std::ldexp(1.0, -k - 1));
  for (auto [lo, hi] : panels) {
    const double mid = 0.5 * (lo + hi), half = 0.5 * (hi - lo);
    for (std::size_t j = 0; j < GL::abscissa().size(); ++j) {
      const double x = GL::abscissa()[j], wj = GL::weights()[j] * half;
      node(mid + half * x, wj);
      if (x != 0.0) node(mid - half * x, wj);
    }
  }
  MomentReport r;
  r.method = "scale-mixture";
  r.prob_mass = l;
  r.prob_error = cache.get(dist, box).error;
  r.mean = u / l;
  if (need_second) {
    r.second_moment = linalg::symmetrize(m / l);
    finish_cov(r);
  }
  return r;
}

inline MomentReport direct(const EllipticalJoint& dist, const TruncationBox& box, bool need_second,
                           const IndexList& target, ProbCache& cache);

inline MomentReport out_of_bounds(const EllipticalJoint& dist, const TruncationBox& box,
                                  const IndexPartition& part, bool need_second, const IndexList& target,
                                  ProbCache& cache) {
  const int d = dist.dim();
  const IndexList& block = part.set_two;
  const EllipticalJoint law2 = marginal(dist, block);
  const Vector mu2 = nearest_in_box(law2, box.slice(block));
  Vector mean(d);
  Matrix second = Matrix::Zero(d, d);
  MomentReport r;
  r.method = "out-of-bounds";
  for (std::size_t j = 0; j < block.size(); ++j) mean(block[j]) = mu2(j);
  const IndexList& rest = part.set_one;
  if (!rest.empty()) {
    const EllipticalJoint cond = conditional(dist, block, mu2);
    const MomentReport sub =
        dispatch(cond, box.slice(rest), need_second, linalg::iota(static_cast<int>(rest.size())), cache);
    for (const auto& n : sub.notes) r.notes.push_back(n);
    if (sub.method != "direct") r.notes.push_back("conditional block: " + sub.method);
    if (sub.used("out-of-bounds")) r.notes.push_back("both blocks out of bounds; point mass at the limits");
    for (std::size_t i = 0; i < rest.size(); ++i) mean(rest[i]) = (*sub.mean)(i);
    if (need_second) {
      for (std::size_t i = 0; i < rest.size(); ++i)
        for (std::size_t j = 0; j < rest.size(); ++j) second(rest[i], rest[j]) = (*sub.covariance)(i, j);
    }
  } else {
    r.notes.push_back("whole box out of bounds; point mass at the nearest limit");
  }
  r.prob_mass = cache.get(dist, box).value;
  r.prob_error = cache.get(dist, box).error;
  r.mean = linalg::take(mean, target);
  if (need_second) {
    r.covariance = linalg::take(second, target, target);
    r.second_moment = *r.covariance + *r.mean * r.mean->transpose();
  }
  return r;
}

/// Underflowed block: coordinates whose own marginal probability underflows,
/// or every coordinate with a finite limit when only the joint does.
inline IndexPartition oob_partition(const EllipticalJoint& dist, const TruncationBox& box) {
  IndexList two;
  for (int i = 0; i < dist.dim(); ++i) {
    const double s = std::sqrt(dist.omega()(i, i));
    const double p = univariate_interval(dist.kernel(), (box.lower(i) - dist.xi()(i)) / s,
                                         (box.upper(i) - dist.xi()(i)) / s);
    if (p < kUnderflowProb) two.push_back(i);
  }
  if (two.empty())
    for (int i = 0; i < dist.dim(); ++i)
      if (!box.doubly_infinite(i)) two.push_back(i);
  return IndexPartition::with_second(dist.dim(), std::move(two));
}

inline MomentReport direct(const EllipticalJoint& dist, const TruncationBox& box, bool need_second,
                           const IndexList& target, ProbCache& cache) {
  const ProbResult p = cache.get(dist, box);
  if (underflowed(p)) return out_of_bounds(dist, box, oob_partition(dist, box), need_second, target, cache);
  const bool analytic = !dist.is_t() || dist.nu() > (need_second ? 2.0 : 1.0);
  if (!analytic) return t_scale_mixture(dist, box, need_second, target, cache);
  const FirstParts fp = first_parts(dist, box, cache);
  return restrict_report(face_identity(dist, box, need_second, cache, fp), target);
}

inline double omega_12_value(const EllipticalJoint& dist2, const TruncationBox& box2, ProbCache& cache) {
  if (!dist2.is_t()) return 1.0;
  const double nu = dist2.nu();
  if (!(nu > 2.0)) throw NonexistenceError("omega_12 requires nu > 2");
  const EllipticalJoint star =
      EllipticalJoint::student_t(nu - 2.0, dist2.xi(), dist2.omega() * (nu / (nu - 2.0)));
  const ProbResult num = cache.get(star, box2);
  const ProbResult den = cache.get(dist2, box2);
  if (underflowed(den)) throw NumericalError("omega_12: box probability underflows");
  return nu / (nu - 2.0) * num.value / den.value;
}

/// Unbounded block X₁ recovered from the bounded block X₂ by regression.
inline MomentReport double_infinite(const EllipticalJoint& dist, const TruncationBox& box, bool need_second,
                                    const IndexList& target, ProbCache& cache) {
  const int d = dist.dim();
  IndexList one, two;
  for (int i = 0; i < d; ++i) (box.doubly_infinite(i) ? one : two).push_back(i);
  const EllipticalJoint law2 = marginal(dist, two);
  const TruncationBox box2 = box.slice(two);
  const int r2 = static_cast<int>(two.size());
  const MomentReport sub = dispatch(law2, box2, need_second, linalg::iota(r2), cache);

  const Matrix& om = dist.omega();
  const Matrix o12 = linalg::take(om, one, two);
  const Matrix o11 = linalg::take(om, one, one);
  const Matrix o22 = linalg::take(om, two, two);
  const Eigen::LLT<Matrix> llt(o22);
  const Matrix b = llt.solve(o12.transpose()).transpose();  // Ω₁₂Ω₂₂⁻¹
  const Vector& mu2 = *sub.mean;
  const Vector mu1 = linalg::take(dist.xi(), one) + b * (mu2 - linalg::take(dist.xi(), two));

  MomentReport r;
  r.method = "double-infinite";
  if (sub.method != "direct") r.notes.push_back("bounded block: " + sub.method);
  for (const auto& n : sub.notes) r.notes.push_back(n);
  r.prob_mass = sub.prob_mass;
  r.prob_error = sub.prob_error;
  Vector mean(d);
  for (std::size_t i = 0; i < one.size(); ++i) mean(one[i]) = mu1(i);
  for (std::size_t i = 0; i < two.size(); ++i) mean(two[i]) = mu2(i);
  r.mean = linalg::take(mean, target);
  if (need_second) {
    const Matrix& s22 = *sub.covariance;
    double omega = 1.0;
    if (dist.is_t()) {
      if (sub.used("out-of-bounds")) {
        // X₂ degenerate at μ₂: the conditional scale is evaluated there.
        omega = (dist.nu() + mahalanobis(law2, mu2)) / (dist.nu() + r2 - 2.0);
      } else {
        omega = omega_12_value(law2, box2, cache);
      }
    }
    const Matrix s11 =
        omega * o11 - b * (omega * Matrix::Identity(r2, r2) - s22 * llt.solve(Matrix::Identity(r2, r2))) *
                          o12.transpose();
    const Matrix s12 = b * s22;
    Matrix cov(d, d);
    for (std::size_t i = 0; i < one.size(); ++i) {
      for (std::size_t j = 0; j < one.size(); ++j) cov(one[i], one[j]) = s11(i, j);
      for (std::size_t j = 0; j < two.size(); ++j) cov(one[i], two[j]) = cov(two[j], one[i]) = s12(i, j);
    }
    for (std::size_t i = 0; i < two.size(); ++i)
      for (std::size_t j = 0; j < two.size(); ++j) cov(two[i], two[j]) = s22(i, j);
    cov = linalg::symmetrize(cov);
    r.covariance = linalg::take(cov, target, target);
    r.second_moment = *r.covariance + *r.mean * r.mean->transpose();
  }
  return r;
}

inline MomentReport untruncated(const EllipticalJoint& dist, bool need_second, const IndexList& target) {
  MomentReport r;
  r.method = "untruncated";
  r.prob_mass = 1.0;
  r.mean = linalg::take(dist.xi(), target);
  if (need_second) {
    double f = 1.0;
    if (dist.is_t()) {
      if (!(dist.nu() > 2.0)) throw NonexistenceError("covariance of an untruncated t requires nu > 2");
      f = dist.nu() / (dist.nu() - 2.0);
    }
    r.covariance = f * linalg::take(dist.omega(), target, target);
    r.second_moment = *r.covariance + *r.mean * r.mean->transpose();
  }
  return r;
}

/// Degenerate coordinates are fixed by conditioning; the rest is recursed.
inline MomentReport degenerate(const EllipticalJoint& dist, const TruncationBox& box, bool need_second,
                               const IndexList& target, ProbCache& cache) {
  const int d = dist.dim();
  IndexList fixed, rest;
  for (int i = 0; i < d; ++i) (box.degenerate(i) ? fixed : rest).push_back(i);
  const Vector vals = linalg::take(box.lower(), fixed);
  Vector mean(d);
  Matrix cov = Matrix::Zero(d, d);
  for (std::size_t j = 0; j < fixed.size(); ++j) mean(fixed[j]) = vals(j);
  MomentReport r;
  r.method = "degenerate";
  r.prob_mass = 0.0;
  if (!rest.empty()) {
    const EllipticalJoint cond = conditional(dist, fixed, vals);
    const MomentReport sub =
        dispatch(cond, box.slice(rest), need_second, linalg::iota(static_cast<int>(rest.size())), cache);
    r.notes.push_back("free block: " + sub.method);
    for (const auto& n : sub.notes) r.notes.push_back(n);
    for (std::size_t i = 0; i < rest.size(); ++i) mean(rest[i]) = (*sub.mean)(i);
    if (need_second)
      for (std::size_t i = 0; i < rest.size(); ++i)
        for (std::size_t j = 0; j < rest.size(); ++j) cov(rest[i], rest[j]) = (*sub.covariance)(i, j);
  }
  r.mean = linalg::take(mean, target);
  if (need_second) {
    r.covariance = linalg::take(cov, target, target);
    r.second_moment = *r.covariance + *r.mean * r.mean->transpose();
  }
  return r;
}

inline MomentReport dispatch(const EllipticalJoint& dist, const TruncationBox& box, bool need_second,
                             const IndexList& target, ProbCache& cache) {
  const int d = dist.dim();
  bool any_degenerate = false, all_inf = true, any_inf = false;
  for (int i = 0; i < d; ++i) {
    any_degenerate = any_degenerate || box.degenerate(i);
    all_inf = all_inf && box.doubly_infinite(i);
    any_inf = any_inf || box.doubly_infinite(i);
  }
  if (any_degenerate) return degenerate(dist, box, need_second, target, cache);
  if (all_inf) return untruncated(dist, need_second, target);
  // The regression shortcut needs ω₁.₂, which needs ν > 2 for second moments.
  const bool di_ok = !dist.is_t() || dist.nu() > (need_second ? 2.0 : 1.0);
  if (any_inf && di_ok) return double_infinite(dist, box, need_second, target, cache);
  return direct(dist, box, need_second, target, cache);
}

inline void check_problem(const EllipticalJoint& dist, const TruncationBox& box) {
  if (box.dim() != dist.dim()) throw ValidationError("box and distribution dimensions differ");
}

}  // namespace detail

/// Mean and covariance of X | box for either kernel, restricted to `target`
/// coordinates (all when empty). Nonexistent moments throw for Mean and
/// MeanAndCov requests and are left absent for Available.
inline MomentReport truncated_mean_cov(const EllipticalJoint& dist, const TruncationBox& box,
                                       MomentRequest request = MomentRequest::MeanAndCov,
                                       const RectangleProbSettings& settings = {}, IndexList target = {}) {
  detail::check_problem(dist, box);
  settings.validate();
  if (target.empty()) target = linalg::iota(dist.dim());
  detail::check_indices(dist.dim(), target);
  const detail::Existence ex = detail::target_existence(dist.kernel(), box, target);
  if (!ex.mean) {
    if (request != MomentRequest::Available)
      throw NonexistenceError("mean does not exist: order 1 on an unbounded coordinate needs 1 < nu + p1");
  }
  if (!ex.second && request == MomentRequest::MeanAndCov)
    throw NonexistenceError("second moments do not exist: order 2 on an unbounded coordinate needs 2 < nu + p1");

  detail::ProbCache cache(settings);
  if (!ex.mean) {
    MomentReport r;
    r.method = "none";
    const ProbResult p = cache.get(dist, box);
    r.prob_mass = p.value;
    r.prob_error = p.error;
    r.mean_exists = r.second_exists = false;
    return r;
  }
  const bool need_second = request == MomentRequest::MeanAndCov || (request == MomentRequest::Available && ex.second);
  MomentReport r = detail::dispatch(dist, box, need_second, target, cache);
  r.mean_exists = ex.mean;
  r.second_exists = ex.second;
  if (!need_second) {
    r.second_moment.reset();
    r.covariance.reset();
  }
  return r;
}

inline MomentReport tmvn_mean_cov(const EllipticalJoint& dist, const TruncationBox& box,
                                  const RectangleProbSettings& settings = {}) {
  if (dist.is_t()) throw ValidationError("tmvn_mean_cov needs the normal kernel");
  return truncated_mean_cov(dist, box, MomentRequest::MeanAndCov, settings);
}

inline MomentReport tmvt_mean_cov(const EllipticalJoint& dist, const TruncationBox& box,
                                  MomentRequest request = MomentRequest::Available,
                                  const RectangleProbSettings& settings = {}) {
  if (!dist.is_t()) throw ValidationError("tmvt_mean_cov needs the Student-t kernel");
  return truncated_mean_cov(dist, box, request, settings);
}

/// Full-dimensional face-identity computation with no double-infinite
/// shortcut: free coordinates stay inside every rectangle probability.
/// Handy as a reference for the regression path.
inline MomentReport direct_mean_cov(const EllipticalJoint& dist, const TruncationBox& box,
                                    RectangleProbSettings settings = {}) {
  detail::check_problem(dist, box);
  settings.validate();
  settings.drop_free_coordinates = false;
  const IndexList all = linalg::iota(dist.dim());
  const detail::Existence ex = detail::target_existence(dist.kernel(), box, all);
  if (!ex.mean || !ex.second) throw NonexistenceError("first two moments do not both exist");
  detail::ProbCache cache(settings);
  return detail::direct(dist, box, true, all, cache);
}

/// ω₁.₂ = E[(ν + δ(X₂)) / (ν + r₂ − 2) | box] for the bounded block.
inline Omega12Constant omega_12(const EllipticalJoint& dist2, const TruncationBox& box2,
                                const RectangleProbSettings& settings = {}) {
  detail::check_problem(dist2, box2);
  detail::ProbCache cache(settings);
  return {detail::omega_12_value(dist2, box2, cache)};
}

inline MomentReport moments_with_double_infinite(const EllipticalJoint& dist, const TruncationBox& box,
                                                 const RectangleProbSettings& settings = {}) {
  detail::check_problem(dist, box);
  const IndexList all = linalg::iota(dist.dim());
  const detail::Existence ex = detail::target_existence(dist.kernel(), box, all);
  if (!ex.mean || !ex.second) throw NonexistenceError("first two moments do not both exist");
  detail::ProbCache cache(settings);
  if (box.all_doubly_infinite()) return detail::untruncated(dist, true, all);
  bool any = false;
  for (int i = 0; i < box.dim(); ++i) any = any || box.doubly_infinite(i);
  if (!any) throw ValidationError("no coordinate has (-inf, inf) limits");
  return detail::double_infinite(dist, box, true, all, cache);
}

/// Out-of-bounds treatment with an explicit partition: set_two is fixed at
/// its Mahalanobis-nearest box point, set_one gets the moments of the
/// conditional law there.
inline MomentReport moments_out_of_bounds(const EllipticalJoint& dist, const TruncationBox& box,
                                          const IndexPartition& partition,
                                          const RectangleProbSettings& settings = {}) {
  detail::check_problem(dist, box);
  IndexPartition::from(dist.dim(), partition.set_one, partition.set_two);
  if (partition.set_two.empty()) throw ValidationError("out-of-bounds block is empty");
  detail::ProbCache cache(settings);
  return detail::out_of_bounds(dist, box, partition, true, linalg::iota(dist.dim()), cache);
}

/// E[X^k | a ≤ X ≤ b] for the normal kernel.
inline double tmvn_product_moment(const EllipticalJoint& dist, const TruncationBox& box,
                                  const MomentOrder& order, const RectangleProbSettings& settings = {},
                                  int max_order = kDefaultMaxOrder) {
  detail::check_problem(dist, box);
  if (dist.is_t()) throw ValidationError("tmvn_product_moment needs the normal kernel");
  order.validate(dist.dim(), max_order);
  settings.validate();
  if (order.total() == 0) return 1.0;

  const int d = dist.dim();
  IndexList fixed;
  for (int i = 0; i < d; ++i)
    if (box.degenerate(i)) fixed.push_back(i);
  detail::ProbCache cache(settings);
  const ProbResult p = fixed.empty() ? cache.get(dist, box) : ProbResult{};
  if (!fixed.empty() || detail::underflowed(p)) {
    IndexList two = fixed;
    Vector vals;
    if (fixed.empty()) {
      two = detail::oob_partition(dist, box).set_two;
      vals = detail::nearest_in_box(marginal(dist, two), box.slice(two));
    } else {
      vals = linalg::take(box.lower(), fixed);
    }
    double factor = 1.0;
    for (std::size_t j = 0; j < two.size(); ++j) factor *= std::pow(vals(j), order.k[two[j]]);
    const IndexList rest = linalg::complement(d, two);
    if (rest.empty()) return factor;
    MomentOrder sub;
    for (int i : rest) sub.k.push_back(order.k[i]);
    return factor * tmvn_product_moment(conditional(dist, two, vals), box.slice(rest), sub, settings, max_order);
  }
  detail::NormalRecursion rec(cache);
  return rec.integral(dist, box, order.k) / p.value;
}

}  // namespace tse
