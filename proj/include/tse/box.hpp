#pragma once

#include <cmath>
#include <sstream>
#include <string>

#include "tse/linalg.hpp"
#include "tse/univariate.hpp"

namespace tse {

/// Coordinate rectangle {x : lower <= x <= upper} with extended-real limits.
class TruncationBox {
 public:
  TruncationBox() = default;

  TruncationBox(Vector lower, Vector upper) : lower_(std::move(lower)), upper_(std::move(upper)) {
    if (lower_.size() != upper_.size())
      throw ValidationError("truncation box limits differ in length");
    for (Eigen::Index i = 0; i < lower_.size(); ++i) {
      const double a = lower_(i), b = upper_(i);
      if (std::isnan(a) || std::isnan(b))
        throw ValidationError("truncation limit is NaN at coordinate " + std::to_string(i));
      if (a > b) {
        std::ostringstream os;
        os << "lower limit exceeds upper limit at coordinate " << i << " (" << a << " > " << b
           << ")";
        throw ValidationError(os.str());
      }
      if (a == kInf || b == -kInf)
        throw ValidationError("empty truncation interval at coordinate " + std::to_string(i));
    }
  }

  /// (-inf, inf)^dim.
  static TruncationBox unbounded(int dim) {
    return {Vector::Constant(dim, -kInf), Vector::Constant(dim, kInf)};
  }

  /// [lower, inf) coordinatewise.
  static TruncationBox lower_bounded(const Vector& lower) {
    return {lower, Vector::Constant(lower.size(), kInf)};
  }

  int dim() const { return static_cast<int>(lower_.size()); }
  const Vector& lower() const { return lower_; }
  const Vector& upper() const { return upper_; }
  double lower(int i) const { return lower_(i); }
  double upper(int i) const { return upper_(i); }

  bool finite_pair(int i) const { return std::isfinite(lower_(i)) && std::isfinite(upper_(i)); }
  bool doubly_infinite(int i) const { return lower_(i) == -kInf && upper_(i) == kInf; }
  bool degenerate(int i) const { return lower_(i) == upper_(i); }

  /// Number of coordinates with both limits finite.
  int count_finite_pairs() const {
    int n = 0;
    for (int i = 0; i < dim(); ++i) n += finite_pair(i) ? 1 : 0;
    return n;
  }

  bool all_doubly_infinite() const {
    for (int i = 0; i < dim(); ++i)
      if (!doubly_infinite(i)) return false;
    return true;
  }

  bool contains(const Vector& x, double slack = 0.0) const {
    for (int i = 0; i < dim(); ++i)
      if (x(i) < lower_(i) - slack || x(i) > upper_(i) + slack) return false;
    return true;
  }

  TruncationBox slice(const IndexList& idx) const {
    return {linalg::take(lower_, idx), linalg::take(upper_, idx)};
  }

  /// Stacks `first` above `second`, as in the augmented selection problem.
  static TruncationBox concat(const TruncationBox& first, const TruncationBox& second) {
    return {linalg::concat(first.lower_, second.lower_), linalg::concat(first.upper_, second.upper_)};
  }

  friend bool operator==(const TruncationBox& x, const TruncationBox& y) {
    return x.dim() == y.dim() && x.lower_ == y.lower_ && x.upper_ == y.upper_;
  }

 private:
  Vector lower_;
  Vector upper_;
};

}  // namespace tse
