#pragma once

// Arbitrary product moments of a truncated selection law. Normal kernels go
// through the exact recursion; Student-t moments above order two fall back
// to Monte Carlo and say so.

#include <cstdint>
#include <string>

#include "tse/mc_oracle.hpp"
#include "tse/selection.hpp"
#include "tse/truncated.hpp"

namespace tse {

struct ProductMoment {
  double value = 0.0;
  double std_error = 0.0;  ///< zero for analytic values
  std::string method;
};

struct MonteCarloSettings {
  long draws = 200000;
  long burn_in = 500;
  std::uint64_t seed = 20210611;
  int threads = 1;
};

namespace detail {

inline ProductMoment mc_product_moment(const SelectionSpec& spec, const TruncationBox& box,
                                       const MomentOrder& order, const MonteCarloSettings& mcs) {
  SampleBatch batch;
  try {
    batch = sample_se_rejection(spec, box, mcs.draws, mcs.seed, mcs.threads);
  } catch (const InfeasibleSampling&) {
    SampleBatch full = sample_truncated_gibbs(spec.joint, spec.augment(box), mcs.draws, mcs.burn_in, mcs.seed);
    batch = full;
    batch.draws = full.draws.rightCols(spec.p);
  }
  const MomentEstimate e = estimate_moments(batch, order);
  return {e.value(0, 0), e.std_error(0, 0), "monte-carlo (" + method_name(batch.method) + ")"};
}

}  // namespace detail

/// E[Y^k | a ≤ Y ≤ b] through the augmented joint with κ = (0, k).
inline ProductMoment tse_moment(const SelectionSpec& spec, const TruncationBox& box, const MomentOrder& order,
                                const RectangleProbSettings& settings = {}, const MonteCarloSettings& mcs = {},
                                int max_order = kDefaultMaxOrder) {
  if (box.dim() != spec.p) throw ValidationError("box must have p coordinates");
  order.validate(spec.p, max_order);
  if (order.total() == 0) return {1.0, 0.0, "trivial"};
  const ExistenceVerdict v = existence_check(spec.kernel(), box, order);
  if (!v.exists)
    throw NonexistenceError("moment of order " + std::to_string(order.total()) +
                            " does not exist: the order on unbounded coordinates must be below nu + p1");
  const TruncationBox aug = spec.augment(box);
  if (!spec.kernel().is_t()) {
    MomentOrder kappa = MomentOrder::zero(spec.q);
    kappa.k.insert(kappa.k.end(), order.k.begin(), order.k.end());
    return {tmvn_product_moment(spec.joint, aug, kappa, settings, max_order), 0.0, "recursion"};
  }
  if (order.total() > 2) return detail::mc_product_moment(spec, box, order, mcs);

  IndexList nz;
  for (int i = 0; i < spec.p; ++i)
    for (int r = 0; r < order.k[static_cast<std::size_t>(i)]; ++r) nz.push_back(i);
  const MomentRequest req = nz.size() == 1 ? MomentRequest::Mean : MomentRequest::MeanAndCov;
  const MomentReport r = tse_mean_cov(spec, box, req, settings);
  const double value = nz.size() == 1 ? r.require_mean()(nz[0]) : r.require_second_moment()(nz[0], nz[1]);
  return {value, 0.0, r.method};
}

}  // namespace tse
