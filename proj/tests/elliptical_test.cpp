#include <gtest/gtest.h>

#include <algorithm>
#include <numbers>
#include <random>

#include "support.hpp"
#include "tse.hpp"

namespace {

using namespace tse;
using tse::testing::simpson;
using tse::testing::simpson2;

Matrix mat2(double a, double b, double c, double d) {
  Matrix m(2, 2);
  m << a, b, c, d;
  return m;
}

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

TEST(Marginal, StandardNormalSubset) {
  const auto j = EllipticalJoint::normal(Vector::Zero(2), Matrix::Identity(2, 2));
  const auto m = marginal(j, {1});
  EXPECT_FALSE(m.is_t());
  EXPECT_EQ(m.dim(), 1);
  EXPECT_EQ(m.xi()(0), 0.0);
  EXPECT_EQ(m.omega()(0, 0), 1.0);
}

TEST(Marginal, OutcomeBlockOfSkewTJoint) {
  Matrix lam = mat2(1, -3, 3, -2);
  const auto prm = SutParams::sut(Vector::Zero(2), mat2(1, 0.2, 0.2, 4), lam, vec({-1, 2}),
                                  mat2(1, -0.5, -0.5, 1), 4.0);
  const auto spec = build_selection(prm);
  const auto y = marginal(spec.joint, {2, 3});
  EXPECT_TRUE(y.is_t());
  EXPECT_EQ(y.nu(), 4.0);
  EXPECT_EQ(y.xi(), Vector::Zero(2));
  EXPECT_TRUE(y.omega().isApprox(mat2(1, 0.2, 0.2, 4), 1e-14));
}

TEST(Marginal, MatchesSampleMeanOfKeptCoordinates) {
  Matrix om(3, 3);
  om << 2, 0.3, -0.4, 0.3, 1, 0.2, -0.4, 0.2, 1.5;
  const auto j = EllipticalJoint::student_t(5.0, vec({0.5, -1, 2}), om);
  const auto m = marginal(j, {0, 2});
  mc::Rng rng(11);
  Vector z(3), x(3);
  const long n = 1000000;
  Matrix draws(n, 2);
  for (long i = 0; i < n; ++i) {
    mc::draw_joint(j, rng, z, x);
    draws(i, 0) = x(0);
    draws(i, 1) = x(2);
  }
  SampleBatch b;
  b.draws = draws;
  const auto est = estimate_mean_cov(b);
  for (int i = 0; i < 2; ++i)
    EXPECT_LE(std::abs(tse::testing::zscore(m.xi()(i), est.mean.value(i, 0), est.mean.std_error(i, 0))), 4.0);
}

TEST(Marginal, ComposesAssociatively) {
  std::mt19937_64 rng(3);
  const auto j = EllipticalJoint::student_t(3.0, tse::testing::random_vector(rng, 5), tse::testing::random_spd(rng, 5));
  const auto once = marginal(j, {1, 3, 4});
  const auto twice = marginal(marginal(j, {0, 1, 3, 4}), {1, 2, 3});
  EXPECT_EQ(once.xi(), twice.xi());
  EXPECT_EQ(once.omega(), twice.omega());
  EXPECT_EQ(once.nu(), twice.nu());
}

TEST(Marginal, RejectsBadIndices) {
  const auto j = EllipticalJoint::normal(Vector::Zero(2), Matrix::Identity(2, 2));
  EXPECT_THROW(marginal(j, {2}), ValidationError);
  EXPECT_THROW(marginal(j, {}), ValidationError);
  EXPECT_THROW(marginal(j, {0, 0}), ValidationError);
}

TEST(Conditional, IndependentNormal) {
  const auto j = EllipticalJoint::normal(Vector::Zero(2), Matrix::Identity(2, 2));
  const auto c = conditional(j, {1}, vec({5}));
  EXPECT_EQ(c.xi()(0), 0.0);
  EXPECT_EQ(c.omega()(0, 0), 1.0);
  EXPECT_FALSE(c.is_t());
}

TEST(Conditional, StudentAtCenter) {
  const auto j = EllipticalJoint::student_t(4.0, Vector::Zero(2), Matrix::Identity(2, 2));
  const auto c = conditional(j, {1}, vec({0}));
  EXPECT_TRUE(c.is_t());
  EXPECT_DOUBLE_EQ(c.nu(), 5.0);
  EXPECT_DOUBLE_EQ(c.xi()(0), 0.0);
  EXPECT_DOUBLE_EQ(c.omega()(0, 0), 0.8);
}

TEST(Conditional, StudentMatchesDensityRatioQuadrature) {
  const auto j = EllipticalJoint::student_t(6.0, Vector::Zero(2), mat2(2, 1, 1, 3));
  const double x2 = 1.5;
  const auto c = conditional(j, {1}, vec({x2}));
  // Oracle: normalize x1 -> f(x1, x2) numerically and take its moments.
  const auto f = [&](double x1) { return density(j, vec({x1, x2})); };
  const double lo = -200, hi = 200;
  const double z = simpson(f, lo, hi, 400000);
  const double m = simpson([&](double x) { return x * f(x); }, lo, hi, 400000) / z;
  const double v = simpson([&](double x) { return (x - m) * (x - m) * f(x); }, lo, hi, 400000) / z;
  EXPECT_NEAR(c.xi()(0), m, 1e-8);
  EXPECT_NEAR(c.omega()(0, 0) * c.nu() / (c.nu() - 2.0), v, 1e-6);
  for (double x : {-2.0, 0.0, 0.4, 3.0}) EXPECT_NEAR(density(c, vec({x})), f(x) / z, 1e-9);
}

TEST(Conditional, DispersionDependsOnValueOnlyForStudent) {
  std::mt19937_64 rng(5);
  const Matrix om = tse::testing::random_spd(rng, 3);
  const Vector xi = tse::testing::random_vector(rng, 3);
  const auto n = EllipticalJoint::normal(xi, om);
  EXPECT_EQ(conditional(n, {2}, vec({-1})).omega(), conditional(n, {2}, vec({4})).omega());

  const auto t = EllipticalJoint::student_t(3.5, xi, om);
  const Vector v1 = vec({0.3, -0.7}), v2 = vec({2.0, 1.0});
  const auto c1 = conditional(t, {0, 2}, v1), c2 = conditional(t, {0, 2}, v2);
  const auto g = marginal(t, {0, 2});
  const double ratio = (3.5 + mahalanobis(g, v2)) / (3.5 + mahalanobis(g, v1));
  EXPECT_NEAR(c2.omega()(0, 0) / c1.omega()(0, 0), ratio, 1e-12);
  EXPECT_DOUBLE_EQ(c1.nu(), 5.5);
}

TEST(Conditional, RejectsFullOrEmptyGivenSet) {
  const auto j = EllipticalJoint::normal(Vector::Zero(2), Matrix::Identity(2, 2));
  EXPECT_THROW(conditional(j, {0, 1}, vec({0, 0})), ValidationError);
  EXPECT_THROW(conditional(j, {}, Vector(0)), ValidationError);
  EXPECT_THROW(conditional(j, {1}, vec({kInf})), ValidationError);
}

TEST(Mahalanobis, SimpleCases) {
  const auto j = EllipticalJoint::normal(vec({1, 2}), mat2(1, 0.2, 0.2, 4));
  EXPECT_EQ(mahalanobis(j, vec({1, 2})), 0.0);
  const auto one = EllipticalJoint::normal(vec({0}), Matrix::Constant(1, 1, 4.0));
  EXPECT_DOUBLE_EQ(mahalanobis(one, vec({2})), 1.0);
}

TEST(Mahalanobis, MatchesExplicitTwoByTwoInverse) {
  const auto j = EllipticalJoint::normal(Vector::Zero(2), mat2(1, 0.2, 0.2, 4));
  // [[1, .2], [.2, 4]]^{-1} = [[4, -.2], [-.2, 1]] / 3.96
  const double expect = (4.0 - 0.2 - 0.2 + 1.0) / 3.96;
  EXPECT_NEAR(mahalanobis(j, vec({1, 1})), expect, 1e-14);
}

TEST(NuFactor, Values) {
  const auto j = EllipticalJoint::student_t(4.0, Vector::Zero(2), Matrix::Identity(2, 2));
  EXPECT_DOUBLE_EQ(nu_factor(j, Vector::Zero(2)), 1.5);
  const auto c = EllipticalJoint::student_t(1.0, vec({0}), Matrix::Constant(1, 1, 1.0));
  EXPECT_DOUBLE_EQ(nu_factor(c, vec({std::sqrt(3.0)})), 0.5);
  EXPECT_THROW(nu_factor(EllipticalJoint::normal(Vector::Zero(1), Matrix::Identity(1, 1)), vec({0})),
               ValidationError);
}

TEST(NuFactor, IdentityOnRandomPoints) {
  std::mt19937_64 rng(8);
  for (int rep = 0; rep < 50; ++rep) {
    const int d = 1 + rep % 4;
    const auto j = EllipticalJoint::student_t(0.5 + rep * 0.3, tse::testing::random_vector(rng, d),
                                              tse::testing::random_spd(rng, d));
    const Vector x = tse::testing::random_vector(rng, d, 3.0);
    EXPECT_NEAR(nu_factor(j, x) * (j.nu() + mahalanobis(j, x)), j.nu() + d, 1e-12 * (j.nu() + d));
  }
}

TEST(Density, UnivariateCenters) {
  EXPECT_NEAR(density(EllipticalJoint::normal(vec({0}), Matrix::Identity(1, 1)), vec({0})), 0.3989422804, 1e-10);
  EXPECT_NEAR(density(EllipticalJoint::student_t(1.0, vec({0}), Matrix::Identity(1, 1)), vec({0})),
              1.0 / std::numbers::pi, 1e-14);
}

TEST(Density, IntegratesToOneOnGrid) {
  const Matrix om = mat2(1.5, 0.4, 0.4, 0.8);
  for (const auto& j : {EllipticalJoint::normal(vec({0.2, -0.1}), om),
                        EllipticalJoint::student_t(30.0, vec({0.2, -0.1}), om)}) {
    const double sx = std::sqrt(om(0, 0)), sy = std::sqrt(om(1, 1));
    const double total = simpson2([&](double x, double y) { return density(j, vec({x, y})); }, 0.2 - 8 * sx,
                                  0.2 + 8 * sx, -0.1 - 8 * sy, -0.1 + 8 * sy, 600);
    EXPECT_NEAR(total, 1.0, 1e-4) << j.kernel().name();
  }
}

TEST(Density, PermutationInvariant) {
  std::mt19937_64 rng(21);
  const Matrix om = tse::testing::random_spd(rng, 3);
  const Vector xi = tse::testing::random_vector(rng, 3), x = tse::testing::random_vector(rng, 3);
  const IndexList perm{2, 0, 1};
  const auto j = EllipticalJoint::student_t(2.5, xi, om);
  const auto jp = EllipticalJoint::student_t(2.5, linalg::take(xi, perm), linalg::take(om, perm, perm));
  EXPECT_NEAR(density(j, x), density(jp, linalg::take(x, perm)), 1e-15);
}

TEST(Univariate, KnownValues) {
  EXPECT_EQ(univariate_cdf(Kernel::normal(), 0.0), 0.5);
  EXPECT_NEAR(univariate_cdf(Kernel::student_t(1.0), 1.0), 0.75, 1e-15);
  EXPECT_THROW(univariate_quantile(Kernel::normal(), 0.0), ValidationError);
  EXPECT_THROW(univariate_quantile(Kernel::normal(), 1.0), ValidationError);
}

TEST(Univariate, QuantileInvertsCdf) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> z(-8.0, 8.0), nu(0.5, 40.0);
  for (int i = 0; i < 1000; ++i) {
    const Kernel k = i % 2 ? Kernel::normal() : Kernel::student_t(nu(rng));
    const double x = z(rng);
    const double p = univariate_cdf(k, x);
    // The upper half is inverted from the survival side to keep precision.
    const double back = x > 0 ? -univariate_quantile(k, univariate_sf(k, x)) : univariate_quantile(k, p);
    EXPECT_NEAR(back, x, 1e-9) << k.name() << " nu=" << k.nu << " x=" << x;
  }
}

TEST(RectangleProb, FullSpaceIsOne) {
  std::mt19937_64 rng(4);
  const auto j = EllipticalJoint::student_t(3.0, Vector::Zero(4), tse::testing::random_spd(rng, 4));
  const auto p = rectangle_prob(j, TruncationBox::unbounded(4));
  EXPECT_EQ(p.value, 1.0);
  EXPECT_EQ(p.error, 0.0);
}

TEST(RectangleProb, SymmetricStudentInterval) {
  const auto j = EllipticalJoint::student_t(4.0, vec({0}), Matrix::Identity(1, 1));
  const double c = 1.3;
  EXPECT_NEAR(rectangle_prob(j, TruncationBox(vec({-c}), vec({c}))).value,
              2.0 * univariate_cdf(Kernel::student_t(4.0), c) - 1.0, 1e-14);
}

TEST(RectangleProb, BivariateOrthant) {
  const auto j = EllipticalJoint::normal(Vector::Zero(2), mat2(1, 0.5, 0.5, 1));
  const auto p = rectangle_prob(j, TruncationBox::lower_bounded(Vector::Zero(2)));
  EXPECT_NEAR(p.value, tse::testing::bvn_orthant(0.5), 1e-9);
  EXPECT_NEAR(p.value, 1.0 / 3.0, 1e-9);
}

TEST(RectangleProb, TrivariateOrthantBothKernels) {
  Matrix c(3, 3);
  c << 1, 0.3, -0.2, 0.3, 1, 0.5, -0.2, 0.5, 1;
  const double expect = tse::testing::trivariate_orthant(0.3, -0.2, 0.5);
  const Matrix om = Vector(vec({2.0, 0.5, 1.0})).asDiagonal() * c * Vector(vec({2.0, 0.5, 1.0})).asDiagonal();
  for (const auto& j : {EllipticalJoint::normal(vec({1, 1, 1}), om), EllipticalJoint::student_t(3.0, vec({1, 1, 1}), om)}) {
    const auto p = rectangle_prob(j, TruncationBox::lower_bounded(vec({1, 1, 1})));
    EXPECT_NEAR(p.value, expect, std::max(1e-6, 2.0 * p.error)) << j.kernel().name();
  }
}

TEST(RectangleProb, DeterministicForFixedSeed) {
  std::mt19937_64 rng(9);
  const auto j = EllipticalJoint::student_t(5.0, Vector::Zero(4), tse::testing::random_spd(rng, 4));
  const TruncationBox b(vec({-1, -0.5, -kInf, 0}), vec({1, 2, 0.5, kInf}));
  const auto p1 = rectangle_prob(j, b), p2 = rectangle_prob(j, b);
  EXPECT_EQ(p1.value, p2.value);
  EXPECT_EQ(p1.error, p2.error);
  RectangleProbSettings other;
  other.seed = 77;
  EXPECT_NEAR(rectangle_prob(j, b, other).value, p1.value, 4.0 * p1.error + 1e-7);
}

TEST(RectangleProb, MonotoneInBox) {
  std::mt19937_64 rng(13);
  for (int rep = 0; rep < 10; ++rep) {
    const int d = 1 + rep % 5;
    const Kernel k = rep % 2 ? Kernel::student_t(2.0 + rep) : Kernel::normal();
    const EllipticalJoint j(k, tse::testing::random_vector(rng, d, 0.5), tse::testing::random_spd(rng, d));
    const Vector lo = tse::testing::random_vector(rng, d) - Vector::Constant(d, 0.5);
    const Vector hi = lo + Vector::Constant(d, 1.0);
    const auto small = rectangle_prob(j, TruncationBox(lo, hi));
    const auto big = rectangle_prob(j, TruncationBox(lo - Vector::Constant(d, 0.3), hi + Vector::Constant(d, 0.2)));
    EXPECT_GE(big.value, small.value - 2.0 * (big.error + small.error));
  }
}

TEST(RectangleProb, ComplementaryHalfLines) {
  for (const Kernel& k : {Kernel::normal(), Kernel::student_t(1.5)}) {
    const EllipticalJoint j(k, vec({0.3}), Matrix::Constant(1, 1, 2.0));
    const auto lo = rectangle_prob(j, TruncationBox(vec({-kInf}), vec({1.1})));
    const auto hi = rectangle_prob(j, TruncationBox(vec({1.1}), vec({kInf})));
    EXPECT_NEAR(lo.value + hi.value, 1.0, std::max(2.0 * (lo.error + hi.error), 1e-15));
  }
}

TEST(RectangleProb, RejectsBadInput) {
  const auto j = EllipticalJoint::normal(Vector::Zero(2), Matrix::Identity(2, 2));
  EXPECT_THROW(TruncationBox(vec({1, 0}), vec({0, 1})), ValidationError);
  EXPECT_THROW(rectangle_prob(j, TruncationBox::unbounded(3)), ValidationError);
  EXPECT_THROW(EllipticalJoint::normal(Vector::Zero(2), mat2(1, 2, 2, 1)), ValidationError);
  RectangleProbSettings s;
  s.max_points = 10;
  EXPECT_THROW(rectangle_prob(j, TruncationBox::unbounded(2), s), ValidationError);
}

}  // namespace
