#pragma once

// Rectangle probabilities P(a <= X <= b) for normal and Student-t joints.
//
// Dimensions with (-inf, inf) limits are dropped first. One remaining
// dimension uses the univariate cdf, two use adaptive Gauss-Kronrod
// quadrature of the conditional interval probability, and three or more use
// randomized quasi-Monte Carlo after Genz's separation-of-variables
// transform (with a chi radial coordinate for the t kernel) and
// Genz-Bretz variable reordering.

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <vector>

#include "tse/box.hpp"
#include "tse/elliptical.hpp"

namespace tse {

struct RectangleProbSettings {
  long max_points = 20000;  ///< lattice points per shift
  double target_abs_error = 1e-6;
  std::uint64_t seed = 20210611;
  int num_shifts = 12;
  bool drop_free_coordinates = true;  ///< integrate (-inf, inf) coordinates out exactly

  void validate() const {
    if (max_points < 1000) throw ValidationError("max_points must be >= 1000");
    if (!(target_abs_error > 0.0)) throw ValidationError("target_abs_error must be > 0");
    if (num_shifts < 8) throw ValidationError("num_shifts must be >= 8");
  }
};

struct ProbResult {
  double value = 0.0;
  double error = 0.0;  ///< 3 x randomized-QMC standard error, or quadrature estimate
};

namespace detail {

// Richtmyer generators: fractional parts of sqrt(prime).
inline constexpr std::array<int, 100> kPrimes = {
    2,   3,   5,   7,   11,  13,  17,  19,  23,  29,  31,  37,  41,  43,  47,  53,  59,
    61,  67,  71,  73,  79,  83,  89,  97,  101, 103, 107, 109, 113, 127, 131, 137, 139,
    149, 151, 157, 163, 167, 173, 179, 181, 191, 193, 197, 199, 211, 223, 227, 229, 233,
    239, 241, 251, 257, 263, 269, 271, 277, 281, 283, 293, 307, 311, 313, 317, 331, 337,
    347, 349, 353, 359, 367, 373, 379, 383, 389, 397, 401, 409, 419, 421, 431, 433, 439,
    443, 449, 457, 461, 463, 467, 479, 487, 491, 499, 503, 509, 521, 523, 541};

inline double frac(double x) { return x - std::floor(x); }

/// Quantile of R = sqrt(G / a), G ~ Gamma(a, 1), a = ν/2: the radial scale of
/// a Student-t draw. log R is tabulated against logit(u) as a cubic Hermite
/// spline with exact slopes; the far tails use the exact inverse.
class ChiQuantile {
 public:
  explicit ChiQuantile(double nu) : a_(0.5 * nu) {
    h_ = (kHi - kLo) / (kNodes - 1);
    y_.resize(kNodes);
    dy_.resize(kNodes);
    for (int k = 0; k < kNodes; ++k) {
      const double v = kLo + k * h_;
      const double u = 1.0 / (1.0 + std::exp(-v));
      const double r = exact(u);
      y_[k] = std::log(r);
      // d log r / dv = u (1 - u) / (r · f_G(a r²) · 2 a r)
      dy_[k] = u * (1.0 - u) / (r * boost::math::gamma_p_derivative(a_, a_ * r * r) * 2.0 * a_ * r);
    }
  }

  double operator()(double u) const {
    if (!(u > 0.0 && u < 1.0)) return exact(u);
    const double x = (std::log(u) - std::log1p(-u) - kLo) / h_;
    if (!(x >= 0.0 && x < kNodes - 1)) return exact(u);
    const int k = static_cast<int>(x);
    const double t = x - k, t2 = t * t, t3 = t2 * t;
    return std::exp((2 * t3 - 3 * t2 + 1) * y_[k] + (t3 - 2 * t2 + t) * h_ * dy_[k] +
                    (-2 * t3 + 3 * t2) * y_[k + 1] + (t3 - t2) * h_ * dy_[k + 1]);
  }

  double exact(double u) const {
    const double g = boost::math::gamma_p_inv(a_, std::clamp(u, 1e-300, 1.0 - 1e-16));
    return std::max(std::sqrt(g / a_), 1e-300);
  }

 private:
  static constexpr int kNodes = 2048;
  static constexpr double kLo = -14.0, kHi = 14.0;
  double a_;
  double h_ = 0.0;
  std::vector<double> y_, dy_;
};

/// Interval probability of a standard normal and the matching inverse map,
/// working in the upper tail when the interval sits above zero.
struct NormalSlice {
  double lo_tail = 0.0;  // Φ(lo), or Φc(lo) when upper
  double p = 0.0;
  bool upper = false;

  NormalSlice(double lo, double hi) {
    if (lo > 0.0) {
      upper = true;
      lo_tail = uni::norm_sf(lo);
      p = lo_tail - uni::norm_sf(hi);
    } else {
      lo_tail = uni::norm_cdf(lo);
      p = uni::norm_cdf(hi) - lo_tail;
    }
    if (p < 0.0) p = 0.0;
  }

  double inverse(double w) const {
    constexpr double tiny = 1e-300;
    if (upper) return uni::norm_isf(std::clamp(lo_tail - w * p, tiny, 1.0 - 1e-16));
    return uni::norm_quantile(std::clamp(lo_tail + w * p, tiny, 1.0 - 1e-16));
  }
};

inline double scaled(double limit, double r) { return std::isinf(limit) ? limit : limit * r; }

inline ProbResult prob_1d(const Kernel& k, double a, double b) {
  return {univariate_interval(k, a, b), 0.0};
}

/// Standardized bivariate problem with correlation rho.
inline ProbResult prob_2d(const Kernel& k, double rho, double a1, double b1, double a2, double b2) {
  if (uni::norm_cdf(a1) > 0.5 && !k.is_t()) {
    std::swap(a1, b1);
    a1 = -a1, b1 = -b1;
    std::swap(a2, b2);
    a2 = -a2, b2 = -b2;
  } else if (k.is_t() && a1 > 0.0) {
    std::swap(a1, b1);
    a1 = -a1, b1 = -b1;
    std::swap(a2, b2);
    a2 = -a2, b2 = -b2;
  }
  const double u0 = univariate_cdf(k, a1);
  const double u1 = univariate_cdf(k, b1);
  if (!(u1 > u0)) return {0.0, 0.0};
  const double c = std::sqrt(std::max(1.0 - rho * rho, 0.0));
  const Kernel kc = k.is_t() ? Kernel::student_t(k.nu + 1.0) : Kernel::normal();
  auto inner = [&](double x) {
    double s = c;
    if (k.is_t()) s *= std::sqrt((k.nu + x * x) / (k.nu + 1.0));
    if (!(s > 0.0)) {
      const double y = rho * x;
      return (y >= a2 && y <= b2) ? 1.0 : 0.0;
    }
    return univariate_interval(kc, (a2 - rho * x) / s, (b2 - rho * x) / s);
  };
  using GK = boost::math::quadrature::gauss_kronrod<double, 61>;
  double err = 0.0, v = 0.0;
  if (k.is_t() && k.nu >= 1.0) {
    // x = √ν tan θ turns the t density into K cos^{ν−1}θ on a finite range,
    // so no quantile is needed at the nodes.
    const double rn = std::sqrt(k.nu);
    const double t0 = std::isinf(a1) ? -std::numbers::pi / 2 : std::atan(a1 / rn);
    const double t1 = std::isinf(b1) ? std::numbers::pi / 2 : std::atan(b1 / rn);
    const double kk = std::exp(std::lgamma(0.5 * (k.nu + 1.0)) - std::lgamma(0.5 * k.nu)) / std::sqrt(std::numbers::pi);
    auto integrand = [&](double th) {
      const double cs = std::cos(th);
      if (!(cs > 0.0)) return 0.0;
      return kk * std::pow(cs, k.nu - 1.0) * inner(rn * std::tan(th));
    };
    v = GK::integrate(integrand, t0, t1, 10, 1e-11, &err);
  } else {
    auto integrand = [&](double u) {
      const double x = k.is_t() ? uni::t_quantile(std::clamp(u, 1e-300, 1.0 - 1e-16), k.nu)
                                : uni::norm_quantile(std::clamp(u, 1e-300, 1.0 - 1e-16));
      return inner(x);
    };
    v = GK::integrate(integrand, u0, u1, 10, 1e-11, &err);
  }
  return {std::clamp(v, 0.0, 1.0), std::max(err, 1e-15)};
}

/// Genz-Bretz ordering plus Cholesky factor of the reordered correlation.
struct OrderedProblem {
  Matrix l;
  Vector a, b;
};

inline OrderedProblem reorder(const Matrix& corr, const Vector& a0, const Vector& b0) {
  const int m = static_cast<int>(corr.rows());
  Matrix c = corr;
  Vector a = a0, b = b0;
  Matrix l = Matrix::Zero(m, m);
  Vector y = Vector::Zero(m);
  for (int i = 0; i < m; ++i) {
    int best = i;
    double best_p = kInf, best_sig = 1.0, best_s = 0.0;
    for (int j = i; j < m; ++j) {
      const double s = i > 0 ? l.row(j).head(i).dot(y.head(i)) : 0.0;
      const double sig2 = c(j, j) - (i > 0 ? l.row(j).head(i).squaredNorm() : 0.0);
      const double sig = std::sqrt(std::max(sig2, 1e-300));
      const double p = univariate_interval(Kernel::normal(), (a(j) - s) / sig, (b(j) - s) / sig);
      if (p < best_p) {
        best_p = p, best = j, best_sig = sig, best_s = s;
      }
    }
    if (best != i) {
      c.row(i).swap(c.row(best));
      c.col(i).swap(c.col(best));
      std::swap(a(i), a(best));
      std::swap(b(i), b(best));
      l.row(i).swap(l.row(best));
    }
    l(i, i) = best_sig;
    for (int j = i + 1; j < m; ++j) {
      const double dot = i > 0 ? l.row(j).head(i).dot(l.row(i).head(i)) : 0.0;
      l(j, i) = (c(j, i) - dot) / best_sig;
    }
    const double lo = (a(i) - best_s) / best_sig, hi = (b(i) - best_s) / best_sig;
    const double p = univariate_interval(Kernel::normal(), lo, hi);
    if (p > 1e-300) {
      const double plo = std::isinf(lo) ? 0.0 : uni::norm_pdf(lo);
      const double phi = std::isinf(hi) ? 0.0 : uni::norm_pdf(hi);
      y(i) = (plo - phi) / p;
    } else {
      y(i) = std::isinf(lo) ? hi : (std::isinf(hi) ? lo : 0.5 * (lo + hi));
    }
  }
  return {std::move(l), std::move(a), std::move(b)};
}

inline ProbResult prob_qmc(const Kernel& k, const Matrix& corr, const Vector& a0, const Vector& b0,
                           const RectangleProbSettings& settings) {
  const int m = static_cast<int>(corr.rows());
  const OrderedProblem op = reorder(corr, a0, b0);
  const int dims = k.is_t() ? m : m - 1;
  if (dims > static_cast<int>(kPrimes.size()))
    throw ValidationError("rectangle probability supports at most 100 dimensions");
  std::vector<double> z(static_cast<std::size_t>(dims));
  for (int j = 0; j < dims; ++j) z[j] = frac(std::sqrt(static_cast<double>(kPrimes[j])));

  std::mt19937_64 rng(settings.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const int nshift = settings.num_shifts;
  std::vector<std::vector<double>> shifts(static_cast<std::size_t>(nshift), std::vector<double>(dims));
  for (auto& s : shifts)
    for (double& v : s) v = unif(rng);

  std::optional<ChiQuantile> chi;
  if (k.is_t()) chi.emplace(k.nu);
  // Row-major copy of the factor; the integrand is the hot loop.
  std::vector<double> lf(static_cast<std::size_t>(m * m));
  for (int i = 0; i < m; ++i)
    for (int j = 0; j <= i; ++j) lf[static_cast<std::size_t>(i * m + j)] = op.l(i, j);
  std::vector<double> w(static_cast<std::size_t>(dims)), y(static_cast<std::size_t>(m));
  auto integrand = [&]() {
    double r = 1.0;
    int off = 0;
    if (k.is_t()) {
      r = (*chi)(w[0]);
      off = 1;
    }
    double f = 1.0;
    for (int i = 0; i < m; ++i) {
      const double* row = &lf[static_cast<std::size_t>(i * m)];
      double s = 0.0;
      for (int j = 0; j < i; ++j) s += row[j] * y[j];
      const double d = row[i];
      const NormalSlice sl((scaled(op.a(i), r) - s) / d, (scaled(op.b(i), r) - s) / d);
      f *= sl.p;
      if (f == 0.0) return 0.0;
      if (i < m - 1) y[i] = sl.inverse(w[i + off]);
    }
    return f;
  };

  std::vector<double> sums(static_cast<std::size_t>(nshift), 0.0);
  long done = 0;
  long target = std::min<long>(1000, settings.max_points);
  double mean = 0.0, se = 0.0;
  while (true) {
    for (int s = 0; s < nshift; ++s) {
      const auto& sh = shifts[s];
      for (long i = done + 1; i <= target; ++i) {
        for (int j = 0; j < dims; ++j) {
          const double x = frac(static_cast<double>(i) * z[j] + sh[j]);
          w[j] = std::abs(2.0 * x - 1.0);
        }
        sums[s] += integrand();
      }
    }
    done = target;
    mean = 0.0;
    for (double v : sums) mean += v / static_cast<double>(done);
    mean /= nshift;
    double var = 0.0;
    for (double v : sums) {
      const double e = v / static_cast<double>(done) - mean;
      var += e * e;
    }
    se = std::sqrt(var / (nshift * (nshift - 1.0)));
    if (3.0 * se <= settings.target_abs_error || done >= settings.max_points) break;
    target = std::min(settings.max_points, 2 * done);
  }
  return {std::clamp(mean, 0.0, 1.0), 3.0 * se};
}

}  // namespace detail

/// P(box.lower <= X <= box.upper) with an error estimate. Deterministic for a
/// fixed settings.seed.
inline ProbResult rectangle_prob(const EllipticalJoint& dist, const TruncationBox& box,
                                 const RectangleProbSettings& settings = {}) {
  settings.validate();
  if (box.dim() != dist.dim()) throw ValidationError("box and distribution dimensions differ");
  IndexList keep;
  for (int i = 0; i < box.dim(); ++i) {
    if (box.degenerate(i)) return {0.0, 0.0};
    if (!box.doubly_infinite(i) || !settings.drop_free_coordinates) keep.push_back(i);
  }
  if (keep.empty()) return {1.0, 0.0};

  const int m = static_cast<int>(keep.size());
  Vector sd(m), a(m), b(m);
  for (int i = 0; i < m; ++i) {
    const int c = keep[i];
    sd(i) = std::sqrt(dist.omega()(c, c));
    a(i) = (box.lower(c) - dist.xi()(c)) / sd(i);
    b(i) = (box.upper(c) - dist.xi()(c)) / sd(i);
  }
  const Kernel& k = dist.kernel();
  if (m == 1) return detail::prob_1d(k, a(0), b(0));
  Matrix corr = linalg::take(dist.omega(), keep, keep);
  corr = sd.asDiagonal().inverse() * corr * sd.asDiagonal().inverse();
  if (m == 2) return detail::prob_2d(k, corr(0, 1), a(0), b(0), a(1), b(1));
  return detail::prob_qmc(k, corr, a, b, settings);
}

}  // namespace tse
