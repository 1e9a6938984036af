#include "nsflow/noise.hpp"

#include <cmath>
#include <limits>
#include <thread>

#include "nsflow/errors.hpp"

namespace nsflow {

namespace {

constexpr uint64_t kNoiseDomain = 0x6e6f6973652d6d63ull;  // "noise-mc"
constexpr uint64_t kBlockSamples = 4096;

struct BlockPartial {
  double sum_p = 0.0, sum_p2 = 0.0, sum_x = 0.0, sum_y = 0.0;
};

}  // namespace

void check_noise_params(const NoiseParams& params) {
  if (!(params.epsilon >= 0.0 && params.epsilon <= 1.0))
    throw OutOfRange("epsilon must lie in [0,1], got " +
                     std::to_string(params.epsilon));
}

Config resample(const ProductSpace& space, const Config& c,
                const NoiseParams& params, RngStream& stream) {
  check_noise_params(params);
  if (c.idx.size() != space.n())
    throw DimensionMismatch("resample: config has " +
                            std::to_string(c.idx.size()) + " coordinates");
  Config out = c;
  for (size_t k = 0; k < space.n(); ++k)
    if (stream.next_bernoulli(params.epsilon))
      out.idx[k] = uint32_t(space.law(k).sample(stream));
  return out;
}

double exact_noise_cov(const VarianceSpectrum& spec,
                       const NoiseParams& params) {
  check_noise_params(params);
  const double keep = 1.0 - params.epsilon;
  double cov = 0.0, scale = 1.0;
  for (size_t d = 1; d < spec.norms_sq.size(); ++d) {
    scale *= keep;
    cov += scale * spec.norms_sq[d];
  }
  return cov;
}

double bruteforce_noise_cov(const TabulatedFunction& f,
                            const NoiseParams& params) {
  check_noise_params(params);
  if (!f.space) throw DimensionMismatch("bruteforce_noise_cov: null space");
  const ProductSpace& sp = *f.space;
  const size_t n = sp.n();
  if (n > 16)
    throw CapExceeded("bruteforce_noise_cov: > 16 coordinates");
  sp.check_cap("bruteforce_noise_cov");
  const uint64_t work = (sp.config_count() << n) * std::max<size_t>(n, 1);
  if (work > (uint64_t(1) << 33))
    throw CapExceeded("bruteforce_noise_cov: subset enumeration too large");

  const double eps = params.epsilon;
  const double mean = expectation(f);
  double cov = 0.0;
  const uint32_t full = n ? (uint32_t(1) << n) - 1u : 0u;
  for (uint32_t s_mask = 0;; ++s_mask) {
    const int s_sz = __builtin_popcount(s_mask);
    const double w =
        std::pow(eps, double(s_sz)) * std::pow(1.0 - eps, double(n - s_sz));
    if (w != 0.0) {
      TabulatedFunction g = cond_mean(f, full & ~s_mask);
      cov += w * (inner_product(f, g) - mean * mean);
    }
    if (s_mask == full) break;
  }
  return cov;
}

namespace {

// One block of the coupled sweep. For every sample: draw a config, then per
// coordinate one keep-uniform and one fresh atom (always consumed, so all
// epsilon columns and both streams stay aligned). Replacement sets are
// nested in epsilon because the same uniform is compared against each one.
void run_block(const ProductSpace& sp,
               const std::function<double(const Config&)>& eval,
               const std::vector<double>& epsilons, uint64_t seed, uint64_t b,
               uint64_t nsamples, BlockPartial* out) {
  RngStream cfg_stream(seed, 2 * b, kNoiseDomain);
  RngStream res_stream(seed, 2 * b + 1, kNoiseDomain);
  const size_t n = sp.n();
  const size_t ne = epsilons.size();
  Config w, wq;
  w.idx.assign(n, 0);
  wq.idx.assign(n, 0);
  std::vector<double> us(n);
  std::vector<uint32_t> fresh(n);
  for (uint64_t s = 0; s < nsamples; ++s) {
    for (size_t k = 0; k < n; ++k) w.idx[k] = uint32_t(sp.law(k).sample(cfg_stream));
    const double y = eval(w);
    for (size_t k = 0; k < n; ++k) {
      us[k] = res_stream.next_unit();
      fresh[k] = uint32_t(sp.law(k).sample(res_stream));
    }
    for (size_t e = 0; e < ne; ++e) {
      const double eps = epsilons[e];
      for (size_t k = 0; k < n; ++k)
        wq.idx[k] = us[k] < eps ? fresh[k] : w.idx[k];
      const double x = eval(wq);
      BlockPartial& p = out[e];
      p.sum_p += x * y;
      p.sum_p2 += x * y * x * y;
      p.sum_x += x;
      p.sum_y += y;
    }
  }
}

struct SweepMc {
  std::vector<double> value, se;
};

SweepMc sweep_mc(const ProductSpace& sp,
                 const std::function<double(const Config&)>& eval,
                 const std::vector<double>& epsilons, uint64_t samples,
                 uint64_t seed, unsigned workers) {
  for (double e : epsilons) check_noise_params(NoiseParams{e});
  if (samples < 2) throw OutOfRange("mc covariance needs >= 2 samples");
  const uint64_t nblocks = (samples + kBlockSamples - 1) / kBlockSamples;
  const size_t ne = epsilons.size();
  std::vector<BlockPartial> partials(nblocks * ne);

  auto work = [&](uint64_t b0, uint64_t step) {
    for (uint64_t b = b0; b < nblocks; b += step) {
      const uint64_t lo = b * kBlockSamples;
      const uint64_t cnt = std::min(kBlockSamples, samples - lo);
      run_block(sp, eval, epsilons, seed, b, cnt, &partials[b * ne]);
    }
  };
  if (workers <= 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < workers; ++t)
      pool.emplace_back(work, uint64_t(t), uint64_t(workers));
    for (auto& t : pool) t.join();
  }

  SweepMc out;
  out.value.assign(ne, 0.0);
  out.se.assign(ne, 0.0);
  const double S = double(samples);
  for (size_t e = 0; e < ne; ++e) {
    double sp_ = 0.0, sp2 = 0.0, sx = 0.0, sy = 0.0;
    for (uint64_t b = 0; b < nblocks; ++b) {
      const BlockPartial& p = partials[b * ne + e];
      sp_ += p.sum_p;
      sp2 += p.sum_p2;
      sx += p.sum_x;
      sy += p.sum_y;
    }
    out.value[e] = sp_ / S - (sx / S) * (sy / S);
    const double var_p = std::max(0.0, (sp2 - sp_ * sp_ / S) / (S - 1.0));
    out.se[e] = std::sqrt(var_p / S);
  }
  return out;
}

}  // namespace

McEstimate mc_noise_cov(const std::function<double(const Config&)>& eval,
                        const SpacePtr& space, const NoiseParams& params,
                        uint64_t samples, uint64_t seed, unsigned workers) {
  if (!space) throw DimensionMismatch("mc_noise_cov: null space");
  SweepMc r = sweep_mc(*space, eval, {params.epsilon}, samples, seed, workers);
  return McEstimate{r.value[0], r.se[0], samples};
}

std::vector<NoiseSweepRow> noise_sweep(const TabulatedFunction& f,
                                       const std::vector<double>& epsilons,
                                       uint64_t samples, uint64_t seed,
                                       unsigned workers, bool with_exact) {
  if (!f.space || f.values.size() != f.space->config_count())
    throw DimensionMismatch("noise_sweep: bad table");
  const SpacePtr sp = f.space;
  auto eval = [sp, &f](const Config& c) {
    return f.values[sp->encode(c.idx.data())];
  };
  SweepMc mc = sweep_mc(*sp, eval, epsilons, samples, seed, workers);

  std::vector<double> exact(epsilons.size(),
                            std::numeric_limits<double>::quiet_NaN());
  if (with_exact) {
    VarianceSpectrum spec = variance_spectrum(f);
    for (size_t e = 0; e < epsilons.size(); ++e)
      exact[e] = exact_noise_cov(spec, NoiseParams{epsilons[e]});
  }

  std::vector<NoiseSweepRow> rows(epsilons.size());
  for (size_t e = 0; e < epsilons.size(); ++e)
    rows[e] = NoiseSweepRow{epsilons[e], exact[e], mc.value[e], mc.se[e]};
  return rows;
}

}  // namespace nsflow
