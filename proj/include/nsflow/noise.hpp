#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "nsflow/chaos.hpp"
#include "nsflow/space.hpp"

namespace nsflow {

struct NoiseParams {
  double epsilon = 0.0;  // per-coordinate resample probability, in [0,1]
};

void check_noise_params(const NoiseParams& params);

// each coordinate kept with prob 1-eps, else replaced by a fresh draw from
// its marginal; draws are consumed lazily (only replaced coordinates sample)
Config resample(const ProductSpace& space, const Config& c,
                const NoiseParams& params, RngStream& stream);

// sum over d >= 1 of (1-eps)^d * norms_sq[d]
double exact_noise_cov(const VarianceSpectrum& spec, const NoiseParams& params);

// independent oracle: sums over resample subsets S with weight
// eps^|S| (1-eps)^(n-|S|), integrating the refreshed coordinates exactly
double bruteforce_noise_cov(const TabulatedFunction& f,
                            const NoiseParams& params);

struct McEstimate {
  double value = 0.0;
  double se = 0.0;
  uint64_t samples = 0;
};

// Paired estimator of Cov[f(w^eps), f(w)]. Samples are split into fixed
// 4096-wide blocks, one pair of streams per block (configs, resamples),
// partials combined in block order, so the result depends only on the seed.
McEstimate mc_noise_cov(const std::function<double(const Config&)>& eval,
                        const SpacePtr& space, const NoiseParams& params,
                        uint64_t samples, uint64_t seed, unsigned workers = 1);

struct NoiseSweepRow {
  double epsilon = 0.0;
  double cov_exact = 0.0;  // NaN when the spectrum is out of enumeration reach
  double cov_mc = 0.0;
  double se = 0.0;
};

// Sweep over epsilons with common random numbers: the same configs and the
// same per-coordinate resample draws back every epsilon column (replacement
// sets are nested as eps grows), which stabilizes trend comparisons.
std::vector<NoiseSweepRow> noise_sweep(const TabulatedFunction& f,
                                       const std::vector<double>& epsilons,
                                       uint64_t samples, uint64_t seed,
                                       unsigned workers = 1,
                                       bool with_exact = true);

}  // namespace nsflow
