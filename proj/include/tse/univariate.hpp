#pragma once

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/erf.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "tse/errors.hpp"

namespace tse {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class Family { Normal, StudentT };

/// Density-generator tag: the normal kernel, or Student-t with `nu` degrees
/// of freedom.
struct Kernel {
  Family family = Family::Normal;
  double nu = kInf;

  static Kernel normal() { return {}; }
  static Kernel student_t(double nu) {
    if (!(nu > 0.0) || std::isnan(nu))
      throw ValidationError("Student-t kernel requires nu > 0");
    return {Family::StudentT, nu};
  }

  bool is_t() const { return family == Family::StudentT; }
  std::string name() const { return is_t() ? "t" : "normal"; }

  friend bool operator==(const Kernel&, const Kernel&) = default;
};

namespace uni {

inline double norm_pdf(double z) {
  return std::exp(-0.5 * z * z) * (0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);
}

inline double norm_logpdf(double z) {
  return -0.5 * z * z - 0.5 * std::log(2.0 * std::numbers::pi);
}

inline double norm_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }
inline double norm_sf(double z) { return 0.5 * std::erfc(z / std::numbers::sqrt2); }

/// Φ⁻¹(p) for p in (0,1).
inline double norm_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    if (p == 0.0) return -kInf;
    if (p == 1.0) return kInf;
    throw ValidationError("normal quantile argument outside [0,1]");
  }
  return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

/// Inverse survival function, accurate for small q.
inline double norm_isf(double q) { return -norm_quantile(q); }

inline double t_logpdf(double z, double nu) {
  return std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) -
         0.5 * std::log(nu * std::numbers::pi) - 0.5 * (nu + 1.0) * std::log1p(z * z / nu);
}

inline double t_pdf(double z, double nu) { return std::exp(t_logpdf(z, nu)); }

inline double t_cdf(double z, double nu) {
  if (std::isinf(z)) return z > 0 ? 1.0 : 0.0;
  return boost::math::cdf(boost::math::students_t(nu), z);
}

inline double t_sf(double z, double nu) {
  if (std::isinf(z)) return z > 0 ? 0.0 : 1.0;
  return boost::math::cdf(boost::math::complement(boost::math::students_t(nu), z));
}

inline double t_quantile(double p, double nu) {
  if (!(p > 0.0 && p < 1.0)) {
    if (p == 0.0) return -kInf;
    if (p == 1.0) return kInf;
    throw ValidationError("t quantile argument outside [0,1]");
  }
  return boost::math::quantile(boost::math::students_t(nu), p);
}

}  // namespace uni

/// Standardized univariate density of the kernel (location 0, scale 1).
inline double univariate_pdf(const Kernel& k, double z) {
  return k.is_t() ? uni::t_pdf(z, k.nu) : uni::norm_pdf(z);
}

inline double univariate_logpdf(const Kernel& k, double z) {
  return k.is_t() ? uni::t_logpdf(z, k.nu) : uni::norm_logpdf(z);
}

inline double univariate_cdf(const Kernel& k, double z) {
  return k.is_t() ? uni::t_cdf(z, k.nu) : uni::norm_cdf(z);
}

inline double univariate_sf(const Kernel& k, double z) {
  return k.is_t() ? uni::t_sf(z, k.nu) : uni::norm_sf(z);
}

inline double univariate_quantile(const Kernel& k, double p) {
  if (!(p > 0.0 && p < 1.0))
    throw ValidationError("quantile argument must lie in (0,1)");
  return k.is_t() ? uni::t_quantile(p, k.nu) : uni::norm_quantile(p);
}

/// P(lo <= Z <= hi) for the standardized kernel, using the tail that keeps
/// relative precision.
inline double univariate_interval(const Kernel& k, double lo, double hi) {
  if (!(lo < hi)) return 0.0;
  if (lo > 0.0) return std::max(0.0, univariate_sf(k, lo) - univariate_sf(k, hi));
  return std::max(0.0, univariate_cdf(k, hi) - univariate_cdf(k, lo));
}

}  // namespace tse
