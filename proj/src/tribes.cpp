#include "nsflow/tribes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "nsflow/errors.hpp"

namespace nsflow {

namespace {

long double log_choose(long double n, long double k) {
  return std::lgamma(n + 1.0L) - std::lgamma(k + 1.0L) -
         std::lgamma(n - k + 1.0L);
}

constexpr long double kLn2 = 0.6931471805599453094172321214581766L;

// P(t Rademacher spins sum to s); exact while the binomial fits 64 bits
// (so floor(1/p) lands on the right side of integral 1/p), log space above
long double pm_sum_pmf(uint64_t t, int64_t s) {
  if (std::llabs(s) > int64_t(t)) return 0.0L;
  if ((int64_t(t) + s) % 2 != 0) return 0.0L;
  uint64_t k = uint64_t((int64_t(t) + s) / 2);
  if (t <= 62) {
    uint64_t kk = std::min(k, t - k);
    unsigned __int128 c = 1;
    for (uint64_t i = 1; i <= kk; ++i) c = c * (t - kk + i) / i;
    return std::ldexp((long double)(uint64_t)c, -(int)t);
  }
  return std::exp(log_choose((long double)t, (long double)k) -
                  (long double)t * kLn2);
}

long double log_binom_pmf(uint64_t n, uint64_t j, long double p) {
  if (j > n) return -std::numeric_limits<long double>::infinity();
  return log_choose((long double)n, (long double)j) +
         (long double)j * std::log(p) +
         (long double)(n - j) * std::log1p(-p);
}

void validate_spec(const TribesSpec& spec) {
  if (spec.t < 2) throw OutOfRange("tribe size must be at least 2");
  if (!(spec.gamma > 0.0 && spec.gamma < 0.5)) {
    throw OutOfRange("gamma must lie in (0, 1/2)");
  }
  if (!(spec.epsilon >= 0.0 && spec.epsilon <= 1.0)) {
    throw OutOfRange("epsilon must lie in [0, 1]");
  }
  if (spec.a_t < 0 || spec.a_t > int64_t(spec.t)) {
    throw OutOfRange("target sum outside [0, t]");
  }
  if ((int64_t(spec.t) - spec.a_t) % 2 != 0) {
    throw OutOfRange("t - a_t must be even");
  }
  if (!(spec.m >= 1.0) || spec.m != std::floor(spec.m)) {
    throw OutOfRange("tribe count must be a positive integer");
  }
}

// P(B+ = B-) for B+ ~ Bin(n_plus, eps/2), B- ~ Bin(n_minus, eps/2),
// windowed to +-50 standard deviations with compensated summation
long double equal_binomials(uint64_t n_plus, uint64_t n_minus, double eps) {
  if (eps == 0.0) return 1.0L;
  long double p2 = (long double)eps / 2.0L;
  long double mu_lo = (long double)n_minus * p2;
  long double mu_hi = (long double)n_plus * p2;
  long double sd =
      std::sqrt((long double)(n_plus + n_minus) * p2 * (1.0L - p2));
  long double lo_f = std::floor(mu_lo - 50.0L * sd) - 5.0L;
  long double hi_f = std::ceil(mu_hi + 50.0L * sd) + 5.0L;
  uint64_t lo = lo_f < 0.0L ? 0 : (uint64_t)lo_f;
  uint64_t hi = std::min<uint64_t>(n_minus, hi_f < 0.0L ? 0 : (uint64_t)hi_f);
  long double sum = 0.0L, comp = 0.0L;
  for (uint64_t j = lo; j <= hi; ++j) {
    long double term =
        std::exp(log_binom_pmf(n_plus, j, p2) + log_binom_pmf(n_minus, j, p2));
    long double y = term - comp;
    long double s = sum + y;
    comp = (s - sum) - y;
    sum = s;
  }
  return sum;
}

}  // namespace

int64_t choose_a_t(uint64_t t, double gamma) {
  if (t < 2) throw OutOfRange("tribe size must be at least 2");
  if (!(gamma > 0.0 && gamma < 0.5)) {
    throw OutOfRange("gamma must lie in (0, 1/2)");
  }
  long double target = std::pow((long double)t, 0.5L + (long double)gamma);
  int64_t a = (int64_t)std::llround(target);
  if ((int64_t(t) - a) % 2 != 0) {
    int64_t lo = a - 1, hi = a + 1;
    if (lo < 0) {
      a = hi;
    } else {
      long double dlo = std::fabs(target - (long double)lo);
      long double dhi = std::fabs(target - (long double)hi);
      a = (dlo <= dhi) ? lo : hi;  // tie goes to the smaller candidate
    }
  }
  if (a > int64_t(t)) throw OutOfRange("target sum exceeds tribe size");
  return a;
}

TribesSpec make_tribes_spec(uint64_t t, double gamma, double epsilon,
                            std::optional<double> m) {
  TribesSpec spec;
  spec.t = t;
  spec.gamma = gamma;
  spec.epsilon = epsilon;
  spec.a_t = choose_a_t(t, gamma);
  if (m) {
    spec.m = *m;
  } else {
    long double p = pm_sum_pmf(t, spec.a_t);
    if (!(p > 0.0L)) throw OutOfRange("hit probability underflowed");
    long double mf = std::floor(1.0L / p);
    if (mf < 9.0e18L) {
      // nudge onto the exact invariant m*p <= 1 < (m+1)*p at integral 1/p;
      // beyond 2^63 the +-1 step is below one ulp of m and p itself caps
      // the attainable resolution
      while (mf > 1.0L && mf * p > 1.0L) mf -= 1.0L;
      while ((mf + 1.0L) * p <= 1.0L) mf += 1.0L;
    }
    spec.m = (double)mf;
  }
  validate_spec(spec);
  return spec;
}

TribesStats tribes_stats(const TribesSpec& spec) {
  validate_spec(spec);
  const uint64_t t = spec.t;
  const int64_t a = spec.a_t;
  const long double m = (long double)spec.m;
  const double eps = spec.epsilon;

  TribesStats st;
  long double p = pm_sum_pmf(t, a);
  if (!(p > 0.0L)) throw OutOfRange("hit probability underflowed");
  st.p_t = (double)p;
  st.m_t = spec.m;

  // flipping one spin moves the remaining t-1 spins' sum to a-1 or a+1;
  // Pascal's rule collapses the two point masses to exactly 2 p_t
  long double r = pm_sum_pmf(t - 1, a - 1) + pm_sum_pmf(t - 1, a + 1);
  st.r_t = (double)r;
  st.r_t_half = (double)(r / 2.0L);

  uint64_t n_plus = (t + (uint64_t)a) / 2;
  uint64_t n_minus = (t - (uint64_t)a) / 2;
  long double q = equal_binomials(n_plus, n_minus, eps);
  st.q_t_eps = (double)q;
  st.mu_eps = (double)a * eps / 2.0;
  st.sigma2_eps = (double)t * (eps / 2.0) * (1.0 - eps / 2.0);

  // per-block survival algebra, kept in log1p/expm1 form because p ~ 1/m:
  // cov = (1-2p+pq)^m - (1-p)^(2m) and 1-2p+pq = (1-p)^2 + p(q-p)
  long double lp = std::log1p(-p);
  long double surv = std::exp(m * lp);            // (1-p)^m
  long double x = p * (q - p) / ((1.0L - p) * (1.0L - p));
  long double cov = std::exp(2.0L * m * lp) * std::expm1(m * std::log1p(x));
  long double var = surv * (-std::expm1(m * lp));
  st.cov_exact = (double)cov;
  st.var_exact = (double)var;

  long double i1 = r * std::exp((m - 1.0L) * lp);
  st.i1_flip = (double)i1;
  long double w_cl = (long double)t * m * i1 * i1;  // 4p(1-p) = 1 at p = 1/2
  st.w_classical = (double)w_cl;
  st.w_exact = (double)(w_cl / 4.0L);

  st.lhs_ratio = (double)(cov / var);
  long double wv = w_cl / var;
  long double lw = -std::log(wv);
  long double theta = (long double)eps / (2.0L - (long double)eps);
  if (lw > 0.0L) {
    long double log_corr =
        -1.0L / (2.0L * (long double)spec.gamma * (2.0L - (long double)eps));
    st.rhs_ratio = (double)(std::pow(wv, theta) * std::pow(lw, log_corr));
  } else {
    st.rhs_ratio = std::numeric_limits<double>::quiet_NaN();
  }
  return st;
}

double tribes_evaluate(const TribesSpec& spec, const Config& c) {
  validate_spec(spec);
  if (spec.m * (double)spec.t > 1e8) {
    throw CapExceeded("tribes evaluation needs t*m <= 1e8 coordinates");
  }
  size_t total = (size_t)spec.m * spec.t;
  if (c.idx.size() != total) {
    throw DimensionMismatch("config has " + std::to_string(c.idx.size()) +
                            " coordinates, spec needs " +
                            std::to_string(total));
  }
  for (size_t b = 0; b + spec.t <= total; b += spec.t) {
    int64_t s = 0;
    for (size_t i = 0; i < spec.t; ++i) s += c.idx[b + i] ? 1 : -1;
    if (s == spec.a_t) return 1.0;
  }
  return 0.0;
}

std::vector<SharpRatioRow> sharp_ratio_report(
    double gamma, double epsilon, const std::vector<uint64_t>& t_grid) {
  std::vector<SharpRatioRow> rows;
  rows.reserve(t_grid.size());
  const double e_m2 = std::exp(-2.0);
  for (uint64_t t : t_grid) {
    TribesSpec spec = make_tribes_spec(t, gamma, epsilon);
    TribesStats st = tribes_stats(spec);
    SharpRatioRow row;
    row.t = t;
    row.a_t = spec.a_t;
    row.p_t = st.p_t;
    row.m_t = st.m_t;
    row.r_t = st.r_t;
    row.q_eps = st.q_t_eps;
    row.cov_exact = st.cov_exact;
    row.var_exact = st.var_exact;
    row.w_inf1 = st.w_exact;
    row.w_classical = st.w_classical;
    row.lhs_ratio = st.lhs_ratio;
    row.rhs_ratio = st.rhs_ratio;
    row.ratio = st.lhs_ratio / st.rhs_ratio;
    row.cond1_ratio = st.cov_exact / (e_m2 * st.q_t_eps);
    row.p_over_q = st.p_t / st.q_t_eps;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace nsflow
