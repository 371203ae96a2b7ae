#pragma once

// Test-only helpers: closed forms, brute-force quadrature, random parameter
// generators. Nothing here calls into the code paths under test except to
// build inputs.

#include <cmath>
#include <functional>
#include <numbers>
#include <random>

#include "tse.hpp"

namespace tse::testing {

inline double phi(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }
inline double Phi(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// Composite Simpson rule with n (even) panels.
inline double simpson(const std::function<double(double)>& f, double a, double b, int n = 2000) {
  if (n % 2) ++n;
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

/// Tensor Simpson over a rectangle.
inline double simpson2(const std::function<double(double, double)>& f, double ax, double bx, double ay, double by,
                       int n = 400) {
  return simpson([&](double x) { return simpson([&](double y) { return f(x, y); }, ay, by, n); }, ax, bx, n);
}

/// P(X₁ > 0, X₂ > 0) for a standard bivariate normal with correlation rho.
inline double bvn_orthant(double rho) { return 0.25 + std::asin(rho) / (2.0 * std::numbers::pi); }

/// P(X > 0) for a trivariate elliptical law with the given correlations.
inline double trivariate_orthant(double r12, double r13, double r23) {
  return 0.125 + (std::asin(r12) + std::asin(r13) + std::asin(r23)) / (4.0 * std::numbers::pi);
}

/// Mean and variance of N(0,1) truncated to [a, b].
inline std::pair<double, double> truncated_normal_1d(double a, double b) {
  if (a > 0.0) {
    const auto [m, v] = truncated_normal_1d(-b, -a);
    return {-m, v};
  }
  const double z = Phi(b) - Phi(a);
  const double pa = std::isinf(a) ? 0.0 : phi(a), pb = std::isinf(b) ? 0.0 : phi(b);
  const double apa = std::isinf(a) ? 0.0 : a * phi(a), bpb = std::isinf(b) ? 0.0 : b * phi(b);
  const double m = (pa - pb) / z;
  return {m, 1.0 + (apa - bpb) / z - m * m};
}

inline Matrix random_spd(std::mt19937_64& rng, int d, double min_eig = 0.3) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix a(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) a(i, j) = n(rng);
  Matrix s = a * a.transpose() / d + min_eig * Matrix::Identity(d, d);
  return 0.5 * (s + s.transpose());
}

inline Matrix random_correlation(std::mt19937_64& rng, int d) {
  const Matrix s = random_spd(rng, d, 0.5);
  const Vector sd = s.diagonal().cwiseSqrt();
  Matrix c = sd.asDiagonal().inverse() * s * sd.asDiagonal().inverse();
  c.diagonal().setOnes();
  return 0.5 * (c + c.transpose());
}

inline Vector random_vector(std::mt19937_64& rng, int d, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Vector v(d);
  for (int i = 0; i < d; ++i) v(i) = n(rng);
  return v;
}

/// |analytic − estimate| ≤ k · se, reported as a z-score.
inline double zscore(double analytic, double estimate, double se) {
  if (se <= 0.0) return analytic == estimate ? 0.0 : kInf;
  return (analytic - estimate) / se;
}

}  // namespace tse::testing
