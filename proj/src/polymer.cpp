#include "nsflow/polymer.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <thread>

#include "nsflow/errors.hpp"
#include "nsflow/rng.hpp"

namespace nsflow {
namespace {

// counter-stream domains; one per independent plane of draws
constexpr uint64_t kDomBits = 0x706c796d62697431ULL;
constexpr uint64_t kDomWide = 0x706c796d77696431ULL;
constexpr uint64_t kDomScreen = 0x706c796d73637231ULL;
constexpr uint64_t kDomFreshBits = 0x706c796d66726231ULL;
constexpr uint64_t kDomFreshWide = 0x706c796d66727731ULL;

// layer / row / column-block packed into the low counter word; the caps in
// make_polymer_params keep every component inside its bit field
inline uint64_t site_ctr(uint64_t n, uint64_t row, uint64_t blk) {
  return (n << 44) | (row << 22) | blk;
}

long double log_mgf_ld(const FiniteLaw& law, long double beta) {
  long double top = -1e30L;
  for (size_t j = 0; j < law.size(); ++j)
    top = std::max(top, beta * (long double)law.atom(j));
  long double s = 0.0L;
  for (size_t j = 0; j < law.size(); ++j)
    s += (long double)law.prob(j) *
         std::exp(beta * (long double)law.atom(j) - top);
  return top + std::log(s);
}

// e^{lambda(2b) - 2 lambda(b)} - 1, the replica overlap weight at inverse
// temperature b; increasing in b for any non-degenerate law
long double overlap_weight(const FiniteLaw& law, long double b) {
  return std::expm1(log_mgf_ld(law, 2.0L * b) - 2.0L * log_mgf_ld(law, b));
}

size_t pidx(int64_t x, int64_t y, int64_t radius, int64_t stride) {
  return size_t((y + radius + 1) * stride + (x + radius + 1));
}

struct SampledProfile {
  std::vector<double> v;  // padded (2r+3)^2 lattice samples
  int64_t lim = 0;        // active L-inf radius
  bool nonneg = true;
};

SampledProfile sample_profile(const TestFunction2D& f,
                              const PolymerParams& params, bool absolute) {
  const int64_t radius = params.box_radius;
  const int64_t stride = 2 * radius + 3;
  const double rt = std::sqrt((double)params.length);
  int64_t lim = (int64_t)std::ceil(f.support_radius * rt - 1e-9);
  if (lim > radius)
    throw SupportEscape("profile support exceeds the lattice box");
  SampledProfile out;
  out.v.assign(size_t(stride) * size_t(stride), 0.0);
  out.lim = lim;
  for (int64_t y = -lim; y <= lim; ++y)
    for (int64_t x = -lim; x <= lim; ++x) {
      double val = f.eval(x / rt, y / rt);
      if (val < 0.0) {
        out.nonneg = false;
        if (absolute) val = -val;
      }
      out.v[pidx(x, y, radius, stride)] = val;
    }
  return out;
}

// one diffusion step, zero beyond the box; src must vanish outside lim
int64_t heat_step(const std::vector<double>& src, std::vector<double>& dst,
                  int64_t lim, int64_t radius, int64_t stride) {
  const int64_t nl = std::min(radius, lim + 1);
  for (int64_t y = -nl; y <= nl; ++y) {
    const double* up = src.data() + pidx(-nl, y - 1, radius, stride);
    const double* dn = src.data() + pidx(-nl, y + 1, radius, stride);
    const double* lf = src.data() + pidx(-nl - 1, y, radius, stride);
    const double* rg = src.data() + pidx(-nl + 1, y, radius, stride);
    double* o = dst.data() + pidx(-nl, y, radius, stride);
    const int64_t w = 2 * nl + 1;
    for (int64_t i = 0; i < w; ++i)
      o[i] = 0.25 * (up[i] + dn[i] + lf[i] + rg[i]);
  }
  return nl;
}

struct TransferScratch {
  std::vector<double> a, b;
  std::vector<uint8_t> atoms;
};

// layer window for the h-side evolution after k steps
int64_t grown_lim(int64_t base, uint64_t k, int64_t radius) {
  return std::min<int64_t>(radius, base + (int64_t)k);
}

template <class Field>
double transfer_value(const Field* field, const PolymerParams& params,
                      const SampledProfile& g, const SampledProfile& h,
                      double s, double t, TransferScratch& ws) {
  if (!(s >= 0.0 && s < t && t <= 1.0))
    throw OutOfRange("need 0 <= s < t <= 1");
  const double nd = (double)params.length;
  const int64_t n_lo = (int64_t)std::floor(nd * s + 1e-9) + 1;
  const int64_t n_hi = (int64_t)std::floor(nd * t + 1e-9);
  if (n_hi < n_lo) throw OutOfRange("time window contains no layer");

  const int64_t radius = params.box_radius;
  const int64_t stride = 2 * radius + 3;
  const size_t cells = size_t(stride) * size_t(stride);
  ws.a = g.v;
  ws.b.assign(cells, 0.0);
  ws.atoms.resize(size_t(2 * radius + 1));

  std::vector<double> w(params.disorder.size());
  const bool weighted = (field != nullptr) && (params.beta != 0.0);
  for (size_t j = 0; j < w.size(); ++j)
    w[j] = std::exp(params.beta * params.disorder.atom(j) -
                    params.lambda_beta);

  std::vector<double>* u = &ws.a;
  std::vector<double>* v = &ws.b;
  int64_t lim = g.lim;
  for (int64_t n = n_lo; n <= n_hi; ++n) {
    const int64_t nl = heat_step(*u, *v, lim, radius, stride);
    if (weighted) {
      for (int64_t y = -nl; y <= nl; ++y) {
        field->fill_atoms((uint64_t)n, y, -nl, nl, ws.atoms.data());
        double* o = v->data() + pidx(-nl, y, radius, stride);
        const int64_t width = 2 * nl + 1;
        for (int64_t i = 0; i < width; ++i) o[i] *= w[ws.atoms[size_t(i)]];
      }
    }
    std::swap(u, v);
    lim = nl;
  }

  const int64_t cl = std::min(lim, h.lim);
  long double acc = 0.0L;
  for (int64_t y = -cl; y <= cl; ++y) {
    const double* a = u->data() + pidx(-cl, y, radius, stride);
    const double* b = h.v.data() + pidx(-cl, y, radius, stride);
    const int64_t width = 2 * cl + 1;
    for (int64_t i = 0; i < width; ++i) acc += (long double)a[i] * b[i];
  }
  return (double)(acc / (long double)params.length);
}

void validate_params(const PolymerParams& params) {
  if (params.length < 2 || params.box_radius < 1)
    throw OutOfRange("polymer parameters not initialised");
}

std::vector<std::vector<uint64_t>> enumerate_monomials(size_t vars,
                                                       uint64_t max_degree) {
  std::vector<std::vector<uint64_t>> out;
  std::vector<uint64_t> cur(vars, 0);
  // lexicographic enumeration of exponent vectors with total degree in
  // [1, max_degree]
  std::function<void(size_t, uint64_t)> rec = [&](size_t pos, uint64_t left) {
    if (pos == vars) {
      uint64_t total = 0;
      for (uint64_t e : cur) total += e;
      if (total >= 1) out.push_back(cur);
      return;
    }
    for (uint64_t e = 0; e <= left; ++e) {
      cur[pos] = e;
      rec(pos + 1, left - e);
    }
    cur[pos] = 0;
  };
  rec(0, max_degree);
  return out;
}

struct BlockPartial {
  double sum_p = 0.0;
  double sum_p2 = 0.0;
  double sum_x = 0.0;
  double sum_y = 0.0;
};

constexpr uint64_t kBlockReplicates = 64;

}  // namespace

double log_mgf(const FiniteLaw& law, double beta) {
  return (double)log_mgf_ld(law, (long double)beta);
}

double solve_beta(const FiniteLaw& law, double target) {
  if (law.size() < 2) throw DegenerateLaw("disorder law needs two atoms");
  if (target < 0.0) throw OutOfRange("overlap weight target must be >= 0");
  if (target == 0.0) return 0.0;
  double amax = law.atom(0);
  for (size_t j = 1; j < law.size(); ++j) amax = std::max(amax, law.atom(j));
  long double pmax = 0.0L;
  for (size_t j = 0; j < law.size(); ++j)
    if (law.atom(j) == amax) pmax += (long double)law.prob(j);
  // as beta grows the weight saturates at (1 - pmax) / pmax
  if ((long double)target >= (1.0L - pmax) / pmax)
    throw NoRoot("overlap weight target unreachable for this law");

  long double lo = 0.0L, hi = 1.0L;
  while (overlap_weight(law, hi) < (long double)target) {
    hi *= 2.0L;
    if (hi > 1e6L) throw NoRoot("bracketing failed");
  }
  while (hi - lo > 1e-12L) {
    const long double mid = 0.5L * (lo + hi);
    if (overlap_weight(law, mid) < (long double)target)
      lo = mid;
    else
      hi = mid;
  }
  return (double)(0.5L * (lo + hi));
}

double overlap_R(uint64_t length) {
  if (length < 1) throw OutOfRange("need length >= 1");
  // P(S_n = S'_n) = (C(2n,n) 4^-n)^2 by the diagonal factorisation of the
  // planar walk; the central binomial ratio is built multiplicatively
  long double c = 1.0L, r = 0.0L;
  for (uint64_t n = 1; n <= length; ++n) {
    c *= (long double)(2 * n - 1) / (long double)(2 * n);
    r += c * c;
  }
  return (double)r;
}

PolymerParams make_polymer_params(uint64_t length, double theta,
                                  const FiniteLaw& disorder, double trunc_tol,
                                  double support_radius) {
  if (length < 2) throw OutOfRange("need length >= 2");
  if (length > (1ULL << 20)) throw CapExceeded("length above 2^20");
  if (!(trunc_tol > 0.0 && trunc_tol <= 0.1))
    throw OutOfRange("trunc_tol must lie in (0, 0.1]");
  if (!(support_radius > 0.0))
    throw OutOfRange("support_radius must be positive");
  if (std::fabs(disorder.mean()) > 1e-9 ||
      std::fabs(disorder.variance() - 1.0) > 1e-9)
    throw OutOfRange("disorder law must be centred with unit variance");

  PolymerParams p;
  p.length = length;
  p.theta = theta;
  p.disorder = disorder;
  p.trunc_tol = trunc_tol;
  p.support_radius = support_radius;
  p.overlap = overlap_R(length);

  const double ln_n = std::log((double)length);
  const double scale = 1.0 + theta / ln_n;
  if (!(scale > 0.0)) throw OutOfRange("theta must exceed -ln(length)");
  const double sigma2 = scale / p.overlap;
  p.sigma = std::sqrt(sigma2);
  p.beta = solve_beta(disorder, sigma2);
  p.lambda_beta = log_mgf(disorder, p.beta);

  long double az = 0.0L;
  for (size_t j = 0; j < disorder.size(); ++j)
    az += (long double)disorder.prob(j) *
          std::fabs(std::expm1((long double)p.beta * disorder.atom(j) -
                               (long double)p.lambda_beta));
  p.mean_abs_zeta = (double)az;

  // each coordinate of the walk moves by at most 1 per step, so Hoeffding
  // keeps the escaped mass below 4 exp(-m^2 / 2N)
  const double nd = (double)length;
  const double drift = std::sqrt(2.0 * nd * std::log(4.0 / trunc_tol));
  p.box_radius = (int64_t)std::ceil(support_radius * std::sqrt(nd) + drift);
  if (p.box_radius >= (1 << 21))
    throw CapExceeded("lattice box exceeds the counter layout");
  return p;
}

double HeatKernelTable::q(int64_t x, int64_t y) const {
  if (std::llabs(x) > radius || std::llabs(y) > radius) return 0.0;
  const int64_t side = 2 * radius + 1;
  return values[size_t((y + radius) * side + (x + radius))];
}

HeatKernelTable srw_kernel(uint64_t steps, int64_t radius) {
  if (radius < 1) throw OutOfRange("need radius >= 1");
  if (radius > 2048) throw CapExceeded("kernel radius above 2048");
  const int64_t stride = 2 * radius + 3;
  const size_t cells = size_t(stride) * size_t(stride);
  std::vector<double> a(cells, 0.0), b(cells, 0.0);
  a[pidx(0, 0, radius, stride)] = 1.0;
  int64_t lim = 0;
  for (uint64_t k = 0; k < steps; ++k) {
    lim = heat_step(a, b, lim, radius, stride);
    std::swap(a, b);
  }
  HeatKernelTable out;
  out.steps = steps;
  out.radius = radius;
  const int64_t side = 2 * radius + 1;
  out.values.assign(size_t(side) * size_t(side), 0.0);
  long double mass = 0.0L;
  for (int64_t y = -radius; y <= radius; ++y)
    for (int64_t x = -radius; x <= radius; ++x) {
      const double val = a[pidx(x, y, radius, stride)];
      out.values[size_t((y + radius) * side + (x + radius))] = val;
      mass += val;
    }
  out.mass = (double)mass;
  return out;
}

uint32_t DisorderField::atom(uint64_t n, int64_t x, int64_t y) const {
  if (n < 1 || n > length || std::llabs(x) > radius || std::llabs(y) > radius)
    throw CoordinateOutOfRange("disorder site outside the field");
  uint8_t out = 0;
  fill_atoms(n, y, x, x, &out);
  return out;
}

void DisorderField::fill_atoms(uint64_t n, int64_t y, int64_t x_lo,
                               int64_t x_hi, uint8_t* out) const {
  const uint64_t row = uint64_t(y + radius);
  uint64_t c = uint64_t(x_lo + radius);
  if (two_atom) {
    std::array<uint32_t, 4> blk{};
    uint64_t cur = ~0ULL;
    for (int64_t x = x_lo; x <= x_hi; ++x, ++c) {
      const uint64_t b = c >> 7;
      if (b != cur) {
        blk = philox_block(key_bits, replicate, site_ctr(n, row, b));
        cur = b;
      }
      const unsigned j = unsigned(c & 127);
      out[x - x_lo] = uint8_t((blk[j >> 5] >> (j & 31)) & 1u);
    }
    return;
  }
  for (int64_t x = x_lo; x <= x_hi; ++x, ++c) {
    const long double u =
        (long double)philox_u64(key_wide, replicate, site_ctr(n, row, c));
    uint32_t a = 0;
    while (u >= cdf[a]) ++a;
    out[x - x_lo] = uint8_t(a);
  }
}

DisorderField make_disorder_field(const PolymerParams& params, uint64_t seed,
                                  uint64_t replicate) {
  validate_params(params);
  if (params.disorder.size() > 255)
    throw CapExceeded("disorder law above 255 atoms");
  DisorderField f;
  f.length = params.length;
  f.radius = params.box_radius;
  f.law = params.disorder;
  f.seed = seed;
  f.replicate = replicate;
  f.two_atom = params.disorder.size() == 2 && params.disorder.prob(0) == 0.5;
  f.key_bits = derive_key(seed, kDomBits);
  f.key_wide = derive_key(seed, kDomWide);
  f.cdf.resize(params.disorder.size());
  long double acc = 0.0L;
  for (size_t j = 0; j < params.disorder.size(); ++j) {
    acc += (long double)params.disorder.prob(j);
    f.cdf[j] = acc * 0x1.0p64L;
  }
  f.cdf.back() = 0x1.0p64L;
  return f;
}

uint32_t ResampledField::atom(uint64_t n, int64_t x, int64_t y) const {
  uint8_t out = 0;
  if (n < 1 || n > base->length || std::llabs(x) > base->radius ||
      std::llabs(y) > base->radius)
    throw CoordinateOutOfRange("disorder site outside the field");
  fill_atoms(n, y, x, x, &out);
  return out;
}

namespace {

// Per-block resample mask over 128 sites. Plane p carries bit p of every
// site's 64-bit uniform word (most significant first); a site is decided
// at its first plane bit that differs from the matching threshold bit, so
// the keep probability is exact to one part in 2^64. Undecided sites halve
// per plane, so a block consumes about log2(128) + 2 planes before the
// early exit. A full plane of ties after 64 rounds means word == thresh,
// which is not below the threshold: the leftovers resample.
struct KeepMask {
  uint64_t lo = 0, hi = 0;  // set bit = resample this site

  bool resample(unsigned j) const {
    return ((j < 64 ? lo : hi) >> (j & 63)) & 1u;
  }
};

KeepMask build_keep_mask(uint64_t key, uint64_t rep, uint64_t base_ctr,
                         uint64_t thresh) {
  KeepMask m;
  uint64_t und_lo = ~0ull, und_hi = ~0ull;
  uint64_t sub = 0;  // plane index, kept in counter bits above the block id
  for (int p = 63; p >= 0; --p) {
    const auto b = philox_block(key, rep, base_ctr | (sub++ << 15));
    const uint64_t pl_lo = uint64_t(b[0]) | (uint64_t(b[1]) << 32);
    const uint64_t pl_hi = uint64_t(b[2]) | (uint64_t(b[3]) << 32);
    if ((thresh >> p) & 1) {
      // threshold bit 1: a 0 bit keeps the site, a 1 bit stays undecided
      und_lo &= pl_lo;
      und_hi &= pl_hi;
    } else {
      // threshold bit 0: a 1 bit resamples, a 0 bit stays undecided
      m.lo |= und_lo & pl_lo;
      m.hi |= und_hi & pl_hi;
      und_lo &= ~pl_lo;
      und_hi &= ~pl_hi;
    }
    if (!(und_lo | und_hi)) return m;
  }
  m.lo |= und_lo;
  m.hi |= und_hi;
  return m;
}

}  // namespace

void ResampledField::fill_atoms(uint64_t n, int64_t y, int64_t x_lo,
                                int64_t x_hi, uint8_t* out) const {
  if (keep_all) {
    base->fill_atoms(n, y, x_lo, x_hi, out);
    return;
  }
  const int64_t radius = base->radius;
  const uint64_t rep = base->replicate;
  const uint64_t row = uint64_t(y + radius);
  if (base->two_atom) {
    // Whole blocks at a time: out = (base & ~resample) | (fresh & resample)
    // in 64-bit words, then one branch-free byte expansion. Bit positions
    // match the per-site extraction in DisorderField::fill_atoms.
    uint64_t c = uint64_t(x_lo + radius);
    const uint64_t c_end = uint64_t(x_hi + radius);
    uint8_t* o = out;
    while (c <= c_end) {
      const uint64_t b = c >> 7;
      const uint64_t blk_last = (b << 7) + 127;
      const uint64_t j_lo = c & 127;
      const uint64_t j_hi = c_end < blk_last ? (c_end & 127) : 127;
      const uint64_t ctr = site_ctr(n, row, b);
      const auto bb = philox_block(base->key_bits, rep, ctr);
      const auto fb = philox_block(key_fresh_bits, rep, ctr);
      const KeepMask m = build_keep_mask(key_screen, rep, ctr, thresh);
      uint64_t w[2];
      w[0] = ((uint64_t(bb[0]) | (uint64_t(bb[1]) << 32)) & ~m.lo) |
             ((uint64_t(fb[0]) | (uint64_t(fb[1]) << 32)) & m.lo);
      w[1] = ((uint64_t(bb[2]) | (uint64_t(bb[3]) << 32)) & ~m.hi) |
             ((uint64_t(fb[2]) | (uint64_t(fb[3]) << 32)) & m.hi);
      for (uint64_t j = j_lo; j <= j_hi; ++j)
        *o++ = uint8_t((w[j >> 6] >> (j & 63)) & 1u);
      c = blk_last + 1;
    }
    return;
  }
  base->fill_atoms(n, y, x_lo, x_hi, out);
  uint64_t c = uint64_t(x_lo + radius);
  KeepMask mask;
  uint64_t cur_mask = ~0ULL;
  for (int64_t x = x_lo; x <= x_hi; ++x, ++c) {
    const uint64_t b = c >> 7;
    if (b != cur_mask) {
      mask = build_keep_mask(key_screen, rep, site_ctr(n, row, b), thresh);
      cur_mask = b;
    }
    if (!mask.resample(unsigned(c & 127))) continue;
    const long double u = (long double)philox_u64(key_fresh_wide, rep,
                                                  site_ctr(n, row, c));
    uint32_t a = 0;
    while (u >= base->cdf[a]) ++a;
    out[x - x_lo] = uint8_t(a);
  }
}

ResampledField make_resampled(const DisorderField& base, double epsilon) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0))
    throw OutOfRange("epsilon must lie in [0, 1]");
  ResampledField r;
  r.base = &base;
  r.epsilon = epsilon;
  r.key_screen = derive_key(base.seed, kDomScreen);
  r.key_fresh_bits = derive_key(base.seed, kDomFreshBits);
  r.key_fresh_wide = derive_key(base.seed, kDomFreshWide);
  const long double keep = (1.0L - (long double)epsilon) * 0x1.0p64L;
  if (keep >= 0x1.0p64L) {
    r.keep_all = true;
    return r;
  }
  r.thresh = (uint64_t)keep;
  return r;
}

PartitionResult partition_function(const DisorderField& field,
                                   const PolymerParams& params,
                                   const TestFunction2D& g,
                                   const TestFunction2D& h, double s,
                                   double t) {
  validate_params(params);
  const SampledProfile gp = sample_profile(g, params, false);
  const SampledProfile hp = sample_profile(h, params, false);
  TransferScratch ws;
  PartitionResult out;
  out.value = transfer_value(&field, params, gp, hp, s, t, ws);
  out.seed = field.seed;
  out.replicate = field.replicate;
  return out;
}

PartitionResult partition_function(const ResampledField& field,
                                   const PolymerParams& params,
                                   const TestFunction2D& g,
                                   const TestFunction2D& h, double s,
                                   double t) {
  validate_params(params);
  const SampledProfile gp = sample_profile(g, params, false);
  const SampledProfile hp = sample_profile(h, params, false);
  TransferScratch ws;
  PartitionResult out;
  out.value = transfer_value(&field, params, gp, hp, s, t, ws);
  out.seed = field.base->seed;
  out.replicate = field.base->replicate;
  return out;
}

double partition_mean(const PolymerParams& params, const TestFunction2D& g,
                      const TestFunction2D& h, double s, double t) {
  validate_params(params);
  const SampledProfile gp = sample_profile(g, params, false);
  const SampledProfile hp = sample_profile(h, params, false);
  TransferScratch ws;
  return transfer_value<DisorderField>(nullptr, params, gp, hp, s, t, ws);
}

namespace {

// value of (profile * q_steps) at one site, by stepping the whole profile
double propagated_at(const SampledProfile& p, uint64_t steps, int64_t zx,
                     int64_t zy, const PolymerParams& params) {
  const int64_t radius = params.box_radius;
  const int64_t stride = 2 * radius + 3;
  if (std::llabs(zx) > radius || std::llabs(zy) > radius) return 0.0;
  std::vector<double> a = p.v;
  std::vector<double> b(a.size(), 0.0);
  int64_t lim = p.lim;
  for (uint64_t k = 0; k < steps; ++k) {
    lim = heat_step(a, b, lim, radius, stride);
    std::swap(a, b);
  }
  return a[pidx(zx, zy, radius, stride)];
}

}  // namespace

PolymerInfluence polymer_influence(const PolymerParams& params,
                                   const TestFunction2D& g,
                                   const TestFunction2D& h, uint64_t n,
                                   int64_t zx, int64_t zy) {
  validate_params(params);
  const SampledProfile gp = sample_profile(g, params, false);
  const SampledProfile hp = sample_profile(h, params, false);
  if (!gp.nonneg || !hp.nonneg)
    throw SignedTestFunction(
        "exact influence needs nonnegative profiles; use the bound");
  PolymerInfluence out;
  if (n < 1 || n > params.length) return out;
  const double gn = propagated_at(gp, n, zx, zy, params);
  const double hn = propagated_at(hp, params.length - n, zx, zy, params);
  const double kernel = gn * hn / (double)params.length;
  out.bound = params.sigma * kernel;
  out.exact = params.mean_abs_zeta * kernel;
  return out;
}

double polymer_influence_bound(const PolymerParams& params,
                               const TestFunction2D& g,
                               const TestFunction2D& h, uint64_t n, int64_t zx,
                               int64_t zy) {
  validate_params(params);
  if (n < 1 || n > params.length) return 0.0;
  const SampledProfile gp = sample_profile(g, params, true);
  const SampledProfile hp = sample_profile(h, params, true);
  const double gn = propagated_at(gp, n, zx, zy, params);
  const double hn = propagated_at(hp, params.length - n, zx, zy, params);
  return params.sigma * gn * hn / (double)params.length;
}

double polymer_W(const PolymerParams& params, const TestFunction2D& g,
                 const TestFunction2D& h) {
  validate_params(params);
  const SampledProfile gp = sample_profile(g, params, false);
  const SampledProfile hp = sample_profile(h, params, false);
  if (!gp.nonneg || !hp.nonneg)
    throw SignedTestFunction(
        "influence sums need nonnegative profiles");
  const uint64_t length = params.length;
  const int64_t radius = params.box_radius;
  const int64_t stride = 2 * radius + 3;
  const size_t cells = size_t(stride) * size_t(stride);
  const uint64_t chunk = (uint64_t)std::ceil(std::sqrt((double)length));

  // forward pass over the h-side evolution, checkpointing every chunk steps
  std::vector<std::vector<double>> cps;
  cps.reserve(size_t(length / chunk) + 1);
  {
    std::vector<double> a = hp.v, b(cells, 0.0);
    for (uint64_t k = 0; k < length; ++k) {
      if (k % chunk == 0) cps.push_back(a);
      heat_step(a, b, grown_lim(hp.lim, k, radius), radius, stride);
      std::swap(a, b);
    }
  }

  std::vector<std::vector<double>> block(chunk,
                                         std::vector<double>(cells, 0.0));
  uint64_t cur_block = ~0ULL;
  std::vector<double> ga = gp.v, gb(cells, 0.0);
  int64_t glim = gp.lim;
  long double acc = 0.0L;
  for (uint64_t n = 1; n <= length; ++n) {
    glim = heat_step(ga, gb, glim, radius, stride);
    std::swap(ga, gb);
    const uint64_t k = length - n;
    const uint64_t j = k / chunk;
    if (j != cur_block) {
      // rebuild H_{jc}..H_{jc+c-1} from the checkpoint; later blocks have
      // smaller windows, so clear each slot before stepping into it
      block[0] = cps[size_t(j)];
      for (uint64_t i = 1; i < chunk && j * chunk + i <= length - 1; ++i) {
        std::fill(block[i].begin(), block[i].end(), 0.0);
        heat_step(block[i - 1], block[i],
                  grown_lim(hp.lim, j * chunk + i - 1, radius), radius,
                  stride);
      }
      cur_block = j;
    }
    const std::vector<double>& hk = block[size_t(k - j * chunk)];
    const int64_t cl = std::min(glim, grown_lim(hp.lim, k, radius));
    for (int64_t y = -cl; y <= cl; ++y) {
      const double* gr = ga.data() + pidx(-cl, y, radius, stride);
      const double* hr = hk.data() + pidx(-cl, y, radius, stride);
      const int64_t w = 2 * cl + 1;
      for (int64_t i = 0; i < w; ++i) {
        const long double prod = (long double)gr[i] * hr[i];
        acc += prod * prod;
      }
    }
  }
  const long double rate =
      (long double)params.mean_abs_zeta / (long double)length;
  return (double)(rate * rate * acc);
}

double white_noise_functional(const DisorderField& field,
                              const PolymerParams& params,
                              const SpaceTimeFunction& rho) {
  validate_params(params);
  const double rt = std::sqrt((double)params.length);
  const int64_t lim = (int64_t)std::ceil(rho.support_radius * rt - 1e-9);
  if (lim > params.box_radius)
    throw SupportEscape("profile support exceeds the lattice box");
  std::vector<uint8_t> row(size_t(2 * lim + 1));
  long double acc = 0.0L;
  for (uint64_t n = 1; n <= params.length; ++n) {
    const double tt = (double)n / (double)params.length;
    for (int64_t y = -lim; y <= lim; ++y) {
      field.fill_atoms(n, y, -lim, lim, row.data());
      for (int64_t x = -lim; x <= lim; ++x) {
        const double r = rho.eval(tt, x / rt, y / rt);
        if (r != 0.0)
          acc += (long double)r * field.law.atom(row[size_t(x + lim)]);
      }
    }
  }
  return (double)(acc / (long double)params.length);
}

double xi_variance(const PolymerParams& params, const SpaceTimeFunction& rho) {
  validate_params(params);
  const double rt = std::sqrt((double)params.length);
  const int64_t lim = (int64_t)std::ceil(rho.support_radius * rt - 1e-9);
  if (lim > params.box_radius)
    throw SupportEscape("profile support exceeds the lattice box");
  long double acc = 0.0L;
  for (uint64_t n = 1; n <= params.length; ++n) {
    const double tt = (double)n / (double)params.length;
    for (int64_t y = -lim; y <= lim; ++y)
      for (int64_t x = -lim; x <= lim; ++x) {
        const long double r = rho.eval(tt, x / rt, y / rt);
        acc += r * r;
      }
  }
  const long double nd = (long double)params.length;
  return (double)(acc / (nd * nd));
}

McCovResult mc_polymer_noise_cov(
    const PolymerParams& params, const std::vector<ZSpec>& specs,
    double epsilon, uint64_t samples, uint64_t seed, unsigned workers,
    const std::function<double(const std::vector<double>&)>& phi,
    const std::function<double(const std::vector<double>&)>& psi) {
  validate_params(params);
  if (specs.empty()) throw OutOfRange("need at least one partition spec");
  if (samples < 2) throw OutOfRange("need at least two samples");
  if (!(epsilon >= 0.0 && epsilon <= 1.0))
    throw OutOfRange("epsilon must lie in [0, 1]");

  std::vector<SampledProfile> gp, hp;
  gp.reserve(specs.size());
  hp.reserve(specs.size());
  for (const ZSpec& z : specs) {
    gp.push_back(sample_profile(z.g, params, false));
    hp.push_back(sample_profile(z.h, params, false));
  }

  const uint64_t n_blocks = (samples + kBlockReplicates - 1) / kBlockReplicates;
  std::vector<BlockPartial> partials(n_blocks);

  auto run_block = [&](uint64_t b, TransferScratch& ws) {
    BlockPartial bp;
    std::vector<double> zb(specs.size()), zr(specs.size());
    const uint64_t r_lo = b * kBlockReplicates;
    const uint64_t r_hi = std::min(samples, r_lo + kBlockReplicates);
    for (uint64_t r = r_lo; r < r_hi; ++r) {
      const DisorderField base = make_disorder_field(params, seed, r);
      const ResampledField res = make_resampled(base, epsilon);
      for (size_t i = 0; i < specs.size(); ++i) {
        zb[i] = transfer_value(&base, params, gp[i], hp[i], specs[i].s,
                               specs[i].t, ws);
        zr[i] = transfer_value(&res, params, gp[i], hp[i], specs[i].s,
                               specs[i].t, ws);
      }
      const double x = psi ? psi(zb) : zb[0];
      const double y = phi ? phi(zr) : zr[0];
      const double p = x * y;
      bp.sum_p += p;
      bp.sum_p2 += p * p;
      bp.sum_x += x;
      bp.sum_y += y;
    }
    partials[b] = bp;
  };

  const unsigned nw =
      std::max(1u, std::min<unsigned>(workers, (unsigned)std::min<uint64_t>(
                                                   n_blocks, 256)));
  if (nw == 1) {
    TransferScratch ws;
    for (uint64_t b = 0; b < n_blocks; ++b) run_block(b, ws);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(nw);
    for (unsigned w = 0; w < nw; ++w)
      pool.emplace_back([&, w]() {
        TransferScratch ws;
        for (uint64_t b = w; b < n_blocks; b += nw) run_block(b, ws);
      });
    for (auto& th : pool) th.join();
  }

  double sp = 0.0, sp2 = 0.0, sx = 0.0, sy = 0.0;
  for (const BlockPartial& bp : partials) {
    sp += bp.sum_p;
    sp2 += bp.sum_p2;
    sx += bp.sum_x;
    sy += bp.sum_y;
  }
  const double sn = (double)samples;
  McCovResult out;
  out.samples = samples;
  out.value = sp / sn - (sx / sn) * (sy / sn);
  out.std_error =
      std::sqrt(std::max(0.0, (sp2 - sp * sp / sn) / (sn - 1.0)) / sn);
  return out;
}

IndependenceReport independence_diagnostic(
    const std::vector<uint64_t>& lengths, double theta,
    const FiniteLaw& disorder, const TestFunction2D& g,
    const TestFunction2D& h, const std::vector<SpaceTimeFunction>& rhos,
    uint64_t max_degree, const std::function<double(double)>& phi,
    uint64_t samples, uint64_t seed, unsigned workers) {
  if (lengths.empty()) throw OutOfRange("need at least one length");
  if (rhos.empty()) throw OutOfRange("need at least one profile");
  if (max_degree < 1 || max_degree > 6)
    throw OutOfRange("monomial degree must lie in [1, 6]");
  if (samples < 2) throw OutOfRange("need at least two samples");

  const auto monomials = enumerate_monomials(rhos.size(), max_degree);
  const size_t n_mon = monomials.size();
  IndependenceReport report;
  report.rows.reserve(lengths.size() * n_mon);

  for (uint64_t length : lengths) {
    double supp = std::max(g.support_radius, h.support_radius);
    for (const SpaceTimeFunction& r : rhos)
      supp = std::max(supp, r.support_radius);
    const PolymerParams params =
        make_polymer_params(length, theta, disorder, 1e-6, supp);
    const double ez = partition_mean(params, g, h);
    const SampledProfile gp = sample_profile(g, params, false);
    const SampledProfile hp = sample_profile(h, params, false);

    // per-profile lattice tables so the sampling loop never calls eval
    const double rt = std::sqrt((double)length);
    int64_t rlim = 0;
    for (const SpaceTimeFunction& r : rhos)
      rlim = std::max(rlim,
                      (int64_t)std::ceil(r.support_radius * rt - 1e-9));
    if (rlim > params.box_radius)
      throw SupportEscape("profile support exceeds the lattice box");
    const int64_t rside = 2 * rlim + 1;
    const size_t layer_cells = size_t(rside) * size_t(rside);
    std::vector<std::vector<double>> rtab(rhos.size());
    for (size_t j = 0; j < rhos.size(); ++j) {
      rtab[j].assign(size_t(length) * layer_cells, 0.0);
      for (uint64_t n = 1; n <= length; ++n) {
        const double tt = (double)n / (double)length;
        double* layer = rtab[j].data() + (n - 1) * layer_cells;
        for (int64_t y = -rlim; y <= rlim; ++y)
          for (int64_t x = -rlim; x <= rlim; ++x)
            layer[size_t((y + rlim) * rside + (x + rlim))] =
                rhos[j].eval(tt, x / rt, y / rt);
      }
    }

    const uint64_t n_blocks =
        (samples + kBlockReplicates - 1) / kBlockReplicates;
    std::vector<std::vector<BlockPartial>> partials(
        n_blocks, std::vector<BlockPartial>(n_mon));

    auto run_block = [&](uint64_t b, TransferScratch& ws) {
      std::vector<double> xi(rhos.size());
      std::vector<uint8_t> row((size_t)rside);
      const uint64_t r_lo = b * kBlockReplicates;
      const uint64_t r_hi = std::min(samples, r_lo + kBlockReplicates);
      for (uint64_t r = r_lo; r < r_hi; ++r) {
        const DisorderField field = make_disorder_field(params, seed, r);
        const double z =
            transfer_value(&field, params, gp, hp, 0.0, 1.0, ws);
        const double u = phi ? phi(z - ez) : (z - ez);
        std::vector<long double> xacc(rhos.size(), 0.0L);
        for (uint64_t n = 1; n <= length; ++n)
          for (int64_t y = -rlim; y <= rlim; ++y) {
            field.fill_atoms(n, y, -rlim, rlim, row.data());
            for (int64_t x = -rlim; x <= rlim; ++x) {
              const double a = field.law.atom(row[size_t(x + rlim)]);
              const size_t cell =
                  (n - 1) * layer_cells +
                  size_t((y + rlim) * rside + (x + rlim));
              for (size_t j = 0; j < rhos.size(); ++j)
                xacc[j] += (long double)rtab[j][cell] * a;
            }
          }
        for (size_t j = 0; j < rhos.size(); ++j)
          xi[j] = (double)(xacc[j] / (long double)length);
        for (size_t m = 0; m < n_mon; ++m) {
          double v = 1.0;
          for (size_t j = 0; j < rhos.size(); ++j)
            for (uint64_t e = 0; e < monomials[m][j]; ++e) v *= xi[j];
          const double p = u * v;
          BlockPartial& bp = partials[b][m];
          bp.sum_p += p;
          bp.sum_p2 += p * p;
          bp.sum_x += u;
          bp.sum_y += v;
        }
      }
    };

    const unsigned nw = std::max(
        1u, std::min<unsigned>(workers,
                               (unsigned)std::min<uint64_t>(n_blocks, 256)));
    if (nw == 1) {
      TransferScratch ws;
      for (uint64_t b = 0; b < n_blocks; ++b) run_block(b, ws);
    } else {
      std::vector<std::thread> pool;
      pool.reserve(nw);
      for (unsigned w = 0; w < nw; ++w)
        pool.emplace_back([&, w]() {
          TransferScratch ws;
          for (uint64_t b = w; b < n_blocks; b += nw) run_block(b, ws);
        });
      for (auto& th : pool) th.join();
    }

    const double sn = (double)samples;
    for (size_t m = 0; m < n_mon; ++m) {
      double sp = 0.0, sp2 = 0.0, sx = 0.0, sy = 0.0;
      for (uint64_t b = 0; b < n_blocks; ++b) {
        sp += partials[b][m].sum_p;
        sp2 += partials[b][m].sum_p2;
        sx += partials[b][m].sum_x;
        sy += partials[b][m].sum_y;
      }
      IndependenceRow rowr;
      rowr.length = length;
      rowr.exponents = monomials[m];
      rowr.cov = sp / sn - (sx / sn) * (sy / sn);
      rowr.std_error =
          std::sqrt(std::max(0.0, (sp2 - sp * sp / sn) / (sn - 1.0)) / sn);
      report.rows.push_back(rowr);
    }
  }

  for (size_t m = 0; m < n_mon; ++m) {
    const IndependenceRow& first = report.rows[m];
    const IndependenceRow& last =
        report.rows[(lengths.size() - 1) * n_mon + m];
    const bool pass = std::fabs(last.cov) <= 3.0 * last.std_error ||
                      std::fabs(last.cov) < std::fabs(first.cov);
    if (!pass) report.decoupled = false;
  }
  return report;
}

void dump_disorder_field(const DisorderField& field, const std::string& path) {
  const int64_t radius = field.radius;
  const int64_t side = 2 * radius + 1;
  const std::string tmp = path + ".tmp";
  FILE* fp = std::fopen(tmp.c_str(), "wb");
  if (!fp) throw OutOfRange("cannot open " + tmp);
  const char magic[4] = {'N', 'S', 'P', 'F'};
  const uint32_t version = 1;
  const uint32_t n32 = (uint32_t)field.length;
  const int32_t r32 = (int32_t)radius;
  bool ok = std::fwrite(magic, 1, 4, fp) == 4 &&
            std::fwrite(&version, 4, 1, fp) == 1 &&
            std::fwrite(&n32, 4, 1, fp) == 1 &&
            std::fwrite(&r32, 4, 1, fp) == 1;
  std::vector<uint8_t> row((size_t)side);
  for (uint64_t n = 1; ok && n <= field.length; ++n)
    for (int64_t y = -radius; ok && y <= radius; ++y) {
      field.fill_atoms(n, y, -radius, radius, row.data());
      ok = std::fwrite(row.data(), 1, row.size(), fp) == row.size();
    }
  ok = (std::fclose(fp) == 0) && ok;
  if (!ok || std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw OutOfRange("cannot write " + path);
  }
}

}  // namespace nsflow
