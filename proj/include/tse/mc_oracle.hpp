#pragma once

// Monte Carlo samplers and estimators: rejection sampling straight from the
// selection definition, and Gibbs sampling for rectangle-truncated normal and
// Student-t laws (the t through its Gamma(ν/2, ν/2) scale mixture).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "tse/box.hpp"
#include "tse/elliptical.hpp"
#include "tse/selection.hpp"
#include "tse/truncated.hpp"

namespace tse {

enum class SampleMethod { Rejection, Gibbs };

inline std::string method_name(SampleMethod m) { return m == SampleMethod::Rejection ? "rejection" : "gibbs"; }

struct SampleBatch {
  Matrix draws;  ///< n × p
  long n_proposed = 0;
  std::uint64_t seed = 0;
  SampleMethod method = SampleMethod::Rejection;

  long size() const { return static_cast<long>(draws.rows()); }
};

struct MomentEstimate {
  Matrix value;
  Matrix std_error;
  double n_effective = 0.0;
};

struct MeanCovEstimate {
  MomentEstimate mean;  ///< p × 1
  MomentEstimate cov;   ///< p × p
};

namespace mc {

/// Child seed for stream `index` (SplitMix64 finalizer).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

using Rng = std::mt19937_64;

inline double std_normal(Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  return n(rng);
}

inline double uniform01(Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double x;
  do x = u(rng);
  while (x == 0.0);
  return x;
}

/// Gamma(shape, rate).
inline double gamma_rate(Rng& rng, double shape, double rate) {
  std::gamma_distribution<double> g(shape, 1.0 / rate);
  return g(rng);
}

/// Z ~ N(0,1) conditioned on lo ≤ Z ≤ hi. Exponential-proposal rejection in
/// the tails beyond 5, uniform rejection on short far intervals, inverse cdf
/// elsewhere.
inline double truncated_std_normal(Rng& rng, double lo, double hi) {
  if (lo == hi) return lo;
  if (hi <= -5.0) return -truncated_std_normal(rng, -hi, -lo);
  if (lo >= 5.0) {
    if (lo * (hi - lo) < 2.0) {
      while (true) {
        const double x = lo + (hi - lo) * uniform01(rng);
        if (uniform01(rng) <= std::exp(-0.5 * (x * x - lo * lo))) return x;
      }
    }
    const double rate = 0.5 * (lo + std::sqrt(lo * lo + 4.0));
    while (true) {
      const double x = lo - std::log(uniform01(rng)) / rate;
      if (x > hi) continue;
      if (uniform01(rng) <= std::exp(-0.5 * (x - rate) * (x - rate))) return x;
    }
  }
  const detail::NormalSlice s(lo, hi);
  if (!(s.p > 0.0)) return std::clamp(0.0, lo, hi);
  return std::clamp(s.inverse(uniform01(rng)), lo, hi);
}

/// One draw from the joint: ξ + L z (normal) or ξ + L z / √w, w ~ Gamma(ν/2, ν/2).
inline void draw_joint(const EllipticalJoint& joint, Rng& rng, Vector& z, Vector& out) {
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = std_normal(rng);
  out.noalias() = joint.chol() * z;
  if (joint.is_t()) out /= std::sqrt(gamma_rate(rng, 0.5 * joint.nu(), 0.5 * joint.nu()));
  out += joint.xi();
}

inline int resolve_threads(int threads) {
  if (threads > 0) return threads;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Runs job(c) for c in [0, chunks) over at most `threads` workers.
template <class Job>
void parallel_chunks(int chunks, int threads, Job job) {
  threads = std::max(1, std::min(resolve_threads(threads), chunks));
  if (threads == 1) {
    for (int c = 0; c < chunks; ++c) job(c);
    return;
  }
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      for (int c = t; c < chunks; c += threads) job(c);
    });
  for (auto& th : pool) th.join();
}

inline int batch_count(long n) { return n >= 1000 ? 100 : 10; }

/// Mean and batch-means standard error of a scalar series.
inline std::pair<double, double> mean_se(const Vector& v) {
  const long n = v.size();
  const double mean = v.mean();
  const int nb = batch_count(n);
  const long len = n / nb;
  double var = 0.0;
  for (int b = 0; b < nb; ++b) {
    const double bm = v.segment(static_cast<Eigen::Index>(b) * len, len).mean();
    var += (bm - mean) * (bm - mean);
  }
  var /= (nb - 1.0);
  return {mean, std::sqrt(var / nb)};
}

}  // namespace mc

/// Draws of Y = X₂ | X₁ ∈ C restricted to the outcome box, by simulating the
/// joint and keeping accepted outcomes. Throws InfeasibleSampling when a
/// 10⁴-proposal pilot accepts less than `min_accept` of the time.
inline SampleBatch sample_se_rejection(const SelectionSpec& spec, const TruncationBox& box, long n,
                                       std::uint64_t seed, int threads = 1, double min_accept = 1e-4) {
  if (n < 1) throw ValidationError("sample size must be >= 1");
  const TruncationBox aug = spec.augment(box);
  const int dim = spec.joint.dim();
  const int p = spec.p;
  {
    mc::Rng rng(mc::derive_seed(seed, 0xffff));
    Vector z(dim), x(dim);
    long acc = 0;
    constexpr long pilot = 10000;
    for (long i = 0; i < pilot; ++i) {
      mc::draw_joint(spec.joint, rng, z, x);
      acc += aug.contains(x) ? 1 : 0;
    }
    if (static_cast<double>(acc) / pilot < min_accept)
      throw InfeasibleSampling("rejection acceptance rate below " + std::to_string(min_accept) +
                               "; use the Gibbs sampler");
  }
  const int chunks = static_cast<int>(std::min<long>(16, n));
  std::vector<Matrix> parts(static_cast<std::size_t>(chunks));
  std::vector<long> proposed(static_cast<std::size_t>(chunks), 0);
  mc::parallel_chunks(chunks, threads, [&](int c) {
    const long want = n / chunks + (c < n % chunks ? 1 : 0);
    mc::Rng rng(mc::derive_seed(seed, static_cast<std::uint64_t>(c)));
    Matrix out(want, p);
    Vector z(dim), x(dim);
    long got = 0, tried = 0;
    while (got < want) {
      mc::draw_joint(spec.joint, rng, z, x);
      ++tried;
      if (aug.contains(x)) out.row(got++) = x.tail(p).transpose();
    }
    parts[static_cast<std::size_t>(c)] = std::move(out);
    proposed[static_cast<std::size_t>(c)] = tried;
  });
  SampleBatch b;
  b.draws.resize(n, p);
  long row = 0;
  for (int c = 0; c < chunks; ++c) {
    b.draws.middleRows(row, parts[c].rows()) = parts[c];
    row += parts[c].rows();
    b.n_proposed += proposed[c];
  }
  b.seed = seed;
  b.method = SampleMethod::Rejection;
  return b;
}

/// Single-chain Gibbs sampler for X | a ≤ X ≤ b.
inline SampleBatch sample_truncated_gibbs(const EllipticalJoint& dist, const TruncationBox& box, long n,
                                          long burn_in, std::uint64_t seed) {
  if (n < 1) throw ValidationError("sample size must be >= 1");
  if (burn_in < 0) throw ValidationError("burn_in must be >= 0");
  if (box.dim() != dist.dim()) throw ValidationError("box and distribution dimensions differ");
  const int d = dist.dim();
  const Matrix prec = linalg::chol_solve(dist.chol(), Matrix::Identity(d, d));
  const Vector& xi = dist.xi();
  mc::Rng rng(seed);
  Vector x = detail::nearest_in_box(dist, box);
  // Start strictly inside where the box allows it.
  for (int i = 0; i < d; ++i) {
    if (box.finite_pair(i)) x(i) = 0.5 * (box.lower(i) + box.upper(i));
  }
  Vector dev = x - xi;
  SampleBatch b;
  b.draws.resize(n, d);
  b.seed = seed;
  b.method = SampleMethod::Gibbs;
  const double nu = dist.is_t() ? dist.nu() : 0.0;
  for (long it = 0; it < burn_in + n; ++it) {
    double w = 1.0;
    if (dist.is_t()) {
      const double delta = dev.dot(prec * dev);
      w = mc::gamma_rate(rng, 0.5 * (nu + d), 0.5 * (nu + delta));
    }
    for (int i = 0; i < d; ++i) {
      double g = 0.0;
      for (int j = 0; j < d; ++j)
        if (j != i) g += prec(i, j) * dev(j);
      const double m = xi(i) - g / prec(i, i);
      const double s = 1.0 / std::sqrt(w * prec(i, i));
      const double z = mc::truncated_std_normal(rng, (box.lower(i) - m) / s, (box.upper(i) - m) / s);
      x(i) = std::clamp(m + s * z, box.lower(i), box.upper(i));
      dev(i) = x(i) - xi(i);
    }
    if (it >= burn_in) b.draws.row(it - burn_in) = x.transpose();
  }
  b.n_proposed = burn_in + n;
  return b;
}

/// Plug-in E[x^k] with a batch-means standard error.
inline MomentEstimate estimate_moments(const SampleBatch& batch, const MomentOrder& order) {
  if (batch.size() < 100) throw ValidationError("moment estimation needs at least 100 draws");
  order.validate(static_cast<int>(batch.draws.cols()));
  MomentEstimate e;
  e.value = Matrix::Constant(1, 1, 1.0);
  e.std_error = Matrix::Zero(1, 1);
  if (order.total() == 0) {
    e.n_effective = static_cast<double>(batch.size());
    return e;
  }
  Vector v = Vector::Ones(batch.size());
  for (int j = 0; j < order.dim(); ++j)
    if (order.k[j] > 0) v = v.cwiseProduct(batch.draws.col(j).array().pow(order.k[j]).matrix());
  const auto [m, se] = mc::mean_se(v);
  e.value(0, 0) = m;
  e.std_error(0, 0) = se;
  const double var = (v.array() - m).square().sum() / (v.size() - 1.0);
  e.n_effective = se > 0.0 ? var / (se * se) : static_cast<double>(batch.size());
  return e;
}

/// Mean vector and unbiased covariance with batch-means standard errors.
inline MeanCovEstimate estimate_mean_cov(const SampleBatch& batch) {
  if (batch.size() < 100) throw ValidationError("moment estimation needs at least 100 draws");
  const Matrix& x = batch.draws;
  const long n = batch.size();
  const int p = static_cast<int>(x.cols());
  MeanCovEstimate out;
  out.mean.value.resize(p, 1);
  out.mean.std_error.resize(p, 1);
  double neff = 0.0;
  for (int j = 0; j < p; ++j) {
    const Vector col = x.col(j);
    const auto [m, se] = mc::mean_se(col);
    out.mean.value(j, 0) = m;
    out.mean.std_error(j, 0) = se;
    const double var = (col.array() - m).square().sum() / (n - 1.0);
    neff += se > 0.0 ? var / (se * se) : static_cast<double>(n);
  }
  out.mean.n_effective = neff / p;
  const Vector mean = out.mean.value.col(0);
  out.cov.value.resize(p, p);
  out.cov.std_error.resize(p, p);
  const double scale = static_cast<double>(n) / (n - 1.0);
  for (int i = 0; i < p; ++i)
    for (int j = i; j < p; ++j) {
      const Vector prod = ((x.col(i).array() - mean(i)) * (x.col(j).array() - mean(j))).matrix();
      const auto [m, se] = mc::mean_se(prod);
      out.cov.value(i, j) = out.cov.value(j, i) = scale * m;
      out.cov.std_error(i, j) = out.cov.std_error(j, i) = scale * se;
    }
  out.cov.n_effective = out.mean.n_effective;
  return out;
}

}  // namespace tse
