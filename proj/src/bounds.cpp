#include "nsflow/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "nsflow/chaos.hpp"
#include "nsflow/errors.hpp"
#include "nsflow/influence.hpp"
#include "nsflow/noise.hpp"
#include "nsflow/rng.hpp"

namespace nsflow {

namespace {

constexpr double kHyperSlack = 1e-12;  // S(eta) <= 1 + slack counts as holding
constexpr double kEtaTol = 1e-8;
constexpr uint64_t kSearchDomain = 0x626f756e6473;  // "bounds"

void check_q(double q) {
  if (!(q > 2.0) || !std::isfinite(q)) {
    throw OutOfRange("moment exponent q must be a finite value above 2");
  }
}

double gauss(RngStream& rng) {
  double u = std::max(rng.next_unit(), 1e-300);
  double v = rng.next_unit();
  return std::sqrt(-2.0 * std::log(u)) * std::cos(6.283185307179586477 * v);
}

void normalize(std::vector<double>& v) {
  double n2 = 0.0;
  for (double x : v) n2 += x * x;
  if (n2 <= 0.0) {
    v.assign(v.size(), 0.0);
    v[0] = 1.0;
    return;
  }
  double inv = 1.0 / std::sqrt(n2);
  for (double& x : v) x *= inv;
}

using SphereFn = std::function<double(const std::vector<double>&)>;

// Coordinate ascent on the unit sphere with a shrinking step. The
// objectives here are smooth with few local maxima in dimension <= 4,
// so this refines a good start to ~1e-10 in position.
double climb(std::vector<double>& v, const SphereFn& eval) {
  double best = eval(v);
  double step = 0.5;
  while (step > 1e-10) {
    bool improved = false;
    for (size_t i = 0; i < v.size(); ++i) {
      for (double sgn : {1.0, -1.0}) {
        std::vector<double> w = v;
        w[i] += sgn * step;
        normalize(w);
        double val = eval(w);
        if (val > best) {
          best = val;
          v = std::move(w);
          improved = true;
        }
      }
    }
    if (!improved) step *= 0.5;
  }
  return best;
}

// The unit sphere in two dimensions is a circle: a dense angle grid plus
// golden-section refinement around the best cell beats stochastic search
// and is deterministic. Near-flat maxima (the tangency structure of the
// hypercontractivity boundary) need the value resolved to ~1e-12, which
// the refinement delivers.
double circle_max(const SphereFn& eval, std::vector<double>* argmax) {
  constexpr int kGrid = 8192;
  constexpr double kTwoPi = 6.283185307179586477;
  std::vector<double> u(2);
  auto val = [&](double t) {
    u[0] = std::cos(t);
    u[1] = std::sin(t);
    return eval(u);
  };
  double best = -1.0;
  int bi = 0;
  for (int i = 0; i < kGrid; ++i) {
    double v = val(kTwoPi * i / kGrid);
    if (v > best) {
      best = v;
      bi = i;
    }
  }
  double lo = kTwoPi * (bi - 1) / kGrid;
  double hi = kTwoPi * (bi + 1) / kGrid;
  constexpr double kGold = 0.6180339887498948482;
  double m1 = hi - kGold * (hi - lo), m2 = lo + kGold * (hi - lo);
  double f1 = val(m1), f2 = val(m2);
  for (int it = 0; it < 120 && hi - lo > 1e-13; ++it) {
    if (f1 < f2) {
      lo = m1;
      m1 = m2;
      f1 = f2;
      m2 = lo + kGold * (hi - lo);
      f2 = val(m2);
    } else {
      hi = m2;
      m2 = m1;
      f2 = f1;
      m1 = hi - kGold * (hi - lo);
      f1 = val(m1);
    }
  }
  double tc = 0.5 * (lo + hi);
  double vc = val(tc);
  if (vc >= best) {
    best = vc;
    if (argmax) *argmax = u;
  } else if (argmax) {
    argmax->assign({std::cos(kTwoPi * bi / kGrid),
                    std::sin(kTwoPi * bi / kGrid)});
  }
  return best;
}

// Dense random directions, then local refinement of the best few.
double sphere_max(size_t dim, const SphereFn& eval, RngStream& rng,
                  std::vector<double>* argmax = nullptr,
                  const std::vector<double>* hint = nullptr) {
  if (dim == 1) {
    std::vector<double> plus{1.0}, minus{-1.0};
    double vp = eval(plus), vm = eval(minus);
    if (argmax) *argmax = (vp >= vm) ? plus : minus;
    return std::max(vp, vm);
  }
  if (dim == 2) return circle_max(eval, argmax);
  size_t ndirs = std::max<size_t>(1000, 400 * dim);
  constexpr size_t kKeep = 6;
  std::vector<std::pair<double, std::vector<double>>> top;
  auto offer = [&](std::vector<double> v) {
    double val = eval(v);
    if (top.size() < kKeep) {
      top.emplace_back(val, std::move(v));
      std::sort(top.begin(), top.end(),
                [](const auto& a, const auto& b) { return a.first > b.first; });
    } else if (val > top.back().first) {
      top.back() = {val, std::move(v)};
      std::sort(top.begin(), top.end(),
                [](const auto& a, const auto& b) { return a.first > b.first; });
    }
  };
  std::vector<double> v(dim);
  for (size_t it = 0; it < ndirs; ++it) {
    for (double& x : v) x = gauss(rng);
    normalize(v);
    offer(v);
  }
  // axis directions catch concentrated maximizers that random draws miss
  for (size_t i = 0; i < dim; ++i) {
    std::vector<double> e(dim, 0.0);
    e[i] = 1.0;
    offer(e);
    e[i] = -1.0;
    offer(e);
  }
  if (hint && hint->size() == dim) offer(*hint);
  double best = -1.0;
  std::vector<double> best_v;
  for (auto& [val, start] : top) {
    std::vector<double> w = start;
    double refined = climb(w, eval);
    if (refined > best) {
      best = refined;
      best_v = std::move(w);
    }
  }
  if (argmax) *argmax = best_v;
  return best;
}

// ||sum_j c_j basis_j||_q under the law's weights, columns of `vals`
// holding the basis values at each atom.
struct WeightedLq {
  const std::vector<double>* probs;
  std::vector<std::vector<double>> vals;  // vals[k][j]: k-th direction at atom j
  double q;

  double operator()(const std::vector<double>& c) const {
    size_t s = probs->size();
    double acc = 0.0;
    for (size_t j = 0; j < s; ++j) {
      double g = 0.0;
      for (size_t k = 0; k < c.size(); ++k) g += c[k] * vals[k][j];
      acc += (*probs)[j] * std::pow(std::fabs(g), q);
    }
    return std::pow(acc, 1.0 / q);
  }
};

}  // namespace

double compute_mq(const FiniteLaw& law, double q) {
  check_q(q);
  size_t s = law.size();
  if (s == 1) return 1.0;
  std::vector<double> h = onb_matrix(law);
  if (s == 2) {
    // centred subspace is one-dimensional, spanned by the unit vector H_1
    double acc = 0.0;
    for (size_t j = 0; j < 2; ++j) {
      acc += law.prob(j) * std::pow(std::fabs(h[2 + j]), q);
    }
    return std::pow(acc, 1.0 / q);
  }
  WeightedLq eval;
  eval.probs = &law.probs();
  eval.q = q;
  for (size_t r = 1; r < s; ++r) {
    eval.vals.emplace_back(h.begin() + r * s, h.begin() + (r + 1) * s);
  }
  RngStream rng(0x4d71, 0, kSearchDomain);
  double m = sphere_max(s - 1, eval, rng);
  return std::max(m, 1.0);
}

HyperProfile eta_q_estimate(const FiniteLaw& law, double q) {
  check_q(q);
  HyperProfile prof;
  prof.q = q;
  prof.m_q = compute_mq(law, q);
  prof.eta_upper = 1.0 / std::sqrt(q - 1.0);
  prof.eta_lower = 1.0 / (2.0 * prof.m_q * std::sqrt(q - 1.0));
  size_t s = law.size();
  if (s == 1) {
    prof.eta_q = prof.eta_upper;
    return prof;
  }

  std::vector<double> h = onb_matrix(law);
  // u_0 multiplies the constant direction, u_1.. the centred basis; for
  // unit u the 2-norm of u_0 + sum u_r H_r is exactly 1 by orthonormality,
  // so S(eta) = max over the sphere of ||u_0 + eta sum u_r H_r||_q and the
  // defining inequality holds at eta iff S(eta) <= 1.
  WeightedLq eval;
  eval.probs = &law.probs();
  eval.q = q;
  eval.vals.assign(s, std::vector<double>(s, 0.0));

  RngStream rng(0x657461, 0, kSearchDomain);
  std::vector<double> hint;
  auto smax = [&](double eta) {
    eval.vals[0].assign(s, 1.0);
    for (size_t r = 1; r < s; ++r) {
      for (size_t j = 0; j < s; ++j) eval.vals[r][j] = eta * h[r * s + j];
    }
    std::vector<double> arg;
    double val = sphere_max(s, std::ref(eval), rng, &arg, &hint);
    hint = std::move(arg);
    return val;
  };

  if (smax(prof.eta_upper) <= 1.0 + kHyperSlack) {
    // tangency case: the analytic upper bracket is attained (violations
    // just above it are second order, so bisection could not certify it)
    prof.eta_q = prof.eta_upper;
    return prof;
  }
  if (smax(prof.eta_lower) > 1.0 + kHyperSlack) {
    throw OutOfRange("hypercontractivity search violated its lower bracket");
  }
  double lo = prof.eta_lower, hi = prof.eta_upper;
  while (hi - lo > kEtaTol) {
    double mid = 0.5 * (lo + hi);
    if (smax(mid) <= 1.0 + kHyperSlack) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  prof.eta_q = lo;
  return prof;
}

HyperProfile space_profile(const ProductSpace& space, double q) {
  check_q(q);
  HyperProfile prof;
  prof.q = q;
  prof.eta_q = 1.0;
  prof.m_q = 1.0;
  prof.eta_upper = 1.0 / std::sqrt(q - 1.0);
  std::vector<const FiniteLaw*> seen;
  for (size_t k = 0; k < space.n(); ++k) {
    const FiniteLaw& law = space.law(k);
    bool dup = false;
    for (const FiniteLaw* other : seen) {
      if (other->atoms() == law.atoms() && other->probs() == law.probs()) {
        dup = true;
        break;
      }
    }
    if (dup) continue;
    seen.push_back(&law);
    HyperProfile one = eta_q_estimate(law, q);
    prof.eta_q = std::min(prof.eta_q, one.eta_q);
    prof.m_q = std::max(prof.m_q, one.m_q);
  }
  prof.eta_lower = 1.0 / (2.0 * prof.m_q * std::sqrt(q - 1.0));
  prof.eta_q = std::min(prof.eta_q, prof.eta_upper);
  return prof;
}

double gamma_exponent(double eps, double q, double eta_q, bool uniform,
                      std::optional<double> m_q) {
  check_q(q);
  if (!(eps >= 0.0 && eps <= 1.0)) {
    throw OutOfRange("epsilon must lie in [0, 1]");
  }
  if (!(eta_q > 0.0 && eta_q < 1.0)) {
    throw OutOfRange("eta_q must lie in (0, 1)");
  }
  double e = eta_q;
  if (uniform) {
    if (!m_q || !(*m_q >= 1.0)) {
      throw OutOfRange("uniform exponent needs M_q >= 1");
    }
    e = 1.0 / (2.0 * *m_q * std::sqrt(q - 1.0));
  }
  double denom = -2.0 * std::log(e);
  double eps_bar = 1.0 - e * e;
  double ee = std::min(eps, 0.5 * eps_bar);
  return (1.0 - 2.0 / q) * (-std::log1p(-ee)) / denom;
}

double alpha_exponent(double q, double eta_q) {
  check_q(q);
  if (!(eta_q > 0.0 && eta_q < 1.0)) {
    throw OutOfRange("eta_q must lie in (0, 1)");
  }
  return (1.0 - 2.0 / q) / (-2.0 * std::log(eta_q));
}

double q_of_epsilon(double eps, double q_bar,
                    const std::function<double(double)>& eta_curve) {
  if (!(eps >= 0.0 && eps < 1.0)) {
    throw OutOfRange("epsilon must lie in [0, 1)");
  }
  if (!(q_bar > 2.0) || !std::isfinite(q_bar)) {
    throw OutOfRange("q_bar must be a finite value above 2");
  }
  constexpr int kGrid = 256;
  std::vector<double> qs(kGrid), etas(kGrid);
  for (int i = 0; i < kGrid; ++i) {
    qs[i] = 2.0 + (q_bar - 2.0) * (i + 1) / kGrid;
    etas[i] = eta_curve(qs[i]);
    if (i > 0 && etas[i] > etas[i - 1] + 1e-12) {
      throw OutOfRange("eta curve is not nonincreasing on (2, q_bar]");
    }
  }
  double target = 1.0 - eps;
  auto admissible = [&](double qq) {
    double e = eta_curve(qq);
    return e * e >= target - 1e-12;
  };
  if (admissible(q_bar)) return q_bar;
  double lo, hi;
  if (!admissible(qs[0])) {
    // the admissible region, if any, hides below the first grid point
    double probe = 2.0 + (q_bar - 2.0) * 1e-9;
    if (!admissible(probe)) {
      throw NoAdmissibleQ("eta_q^2 < 1 - eps already just above q = 2");
    }
    lo = probe;
    hi = qs[0];
  } else {
    int last_ok = 0;
    for (int i = 1; i < kGrid; ++i) {
      if (!admissible(qs[i])) break;
      last_ok = i;
    }
    lo = qs[last_ok];
    hi = (last_ok + 1 < kGrid) ? qs[last_ok + 1] : q_bar;
  }
  while (hi - lo > kEtaTol) {
    double mid = 0.5 * (lo + hi);
    if (admissible(mid)) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return lo;
}

const char* bound_mode_name(BoundMode mode) {
  switch (mode) {
    case BoundMode::general:
      return "general";
    case BoundMode::refined:
      return "refined";
    case BoundMode::optimal:
      return "optimal";
    case BoundMode::k_power:
      return "k_power";
    case BoundMode::key_bound:
      return "key_bound";
    case BoundMode::kk_original:
      return "kk_original";
    case BoundMode::vh:
      return "vh";
  }
  return "unknown";
}

BoundReport check_bound(const TabulatedFunction& f, double eps, BoundMode mode,
                        const HyperProfile& profile, int k_param) {
  if (!(eps >= 0.0 && eps <= 1.0)) {
    throw OutOfRange("epsilon must lie in [0, 1]");
  }
  if (mode == BoundMode::key_bound) {
    throw OutOfRange("key_bound mode carries a degree, call check_key_bound");
  }
  if (k_param < 1) throw OutOfRange("K must be a positive integer");

  BoundReport rep;
  rep.mode = mode;
  rep.epsilon = eps;
  rep.q = profile.q;
  rep.eta_q = profile.eta_q;
  rep.k_param = k_param;

  VarianceSpectrum spec = variance_spectrum(f);
  double var = spec.total_variance();
  if (var < 1e-14) throw ZeroVariance("variance below 1e-14");
  double cov = exact_noise_cov(spec, NoiseParams{eps});
  InfluenceProfile inf = influence_profile(f);
  double ratio = inf.w_total / var;

  switch (mode) {
    case BoundMode::general: {
      rep.exponent_used =
          gamma_exponent(eps, profile.q, profile.eta_q, false, std::nullopt);
      rep.lhs = cov / var;
      rep.rhs = 4.0 * std::pow(ratio, rep.exponent_used);
      break;
    }
    case BoundMode::refined: {
      double q_bar = 4.0 + 2.0 / (1.0 - eps);
      double qe = q_of_epsilon(eps, q_bar, [](double qq) {
        return 1.0 / std::sqrt(qq - 1.0);
      });
      rep.q = qe;
      rep.exponent_used = 1.0 - 2.0 / qe;
      rep.lhs = cov / var;
      rep.rhs = std::pow(ratio, rep.exponent_used);
      break;
    }
    case BoundMode::optimal:
    case BoundMode::vh: {
      rep.exponent_used = eps / (2.0 - eps);
      rep.lhs = cov / var;
      rep.rhs = std::pow(ratio, rep.exponent_used);
      break;
    }
    case BoundMode::k_power: {
      double r = std::pow(1.0 - eps, k_param);
      rep.exponent_used = (1.0 - r) / (1.0 + r);
      rep.lhs = cov / var;
      rep.rhs = std::pow(ratio, rep.exponent_used);
      break;
    }
    case BoundMode::kk_original: {
      // historical comparison form, stated for binary coordinates with the
      // flip influences; lhs is the raw covariance
      if (!f.space->all_binary() || !inf.classical) {
        throw OutOfRange("kk_original mode needs binary coordinates");
      }
      double w_cl = 0.0;
      for (size_t k = 0; k < f.space->n(); ++k) {
        double p = f.space->law(k).prob(0);
        double ik = (*inf.classical)[k];
        w_cl += 4.0 * p * (1.0 - p) * ik * ik;
      }
      rep.exponent_used = 0.234 * eps;
      rep.lhs = cov;
      rep.rhs = 20.0 * std::pow(w_cl, rep.exponent_used);
      break;
    }
    case BoundMode::key_bound:
      break;  // rejected above
  }
  rep.holds = rep.lhs <= rep.rhs + 1e-12;
  return rep;
}

BoundReport check_key_bound(const TabulatedFunction& f, size_t d,
                            const HyperProfile& profile) {
  if (d < 1) throw OutOfRange("degree must be at least 1");
  BoundReport rep;
  rep.mode = BoundMode::key_bound;
  rep.q = profile.q;
  rep.eta_q = profile.eta_q;
  rep.degree = static_cast<int>(d);

  VarianceSpectrum spec = variance_spectrum(f);
  double var = spec.total_variance();
  if (var < 1e-14) throw ZeroVariance("variance below 1e-14");
  InfluenceProfile inf = influence_profile(f);
  double ratio = inf.w_total / var;
  rep.exponent_used = 1.0 - 2.0 / profile.q;

  double low_mass = 0.0;
  for (size_t l = 1; l < spec.norms_sq.size() && l <= d; ++l) {
    low_mass += spec.norms_sq[l];
  }
  rep.lhs = low_mass / var;
  double base = std::pow(ratio, rep.exponent_used);
  rep.rhs = std::pow(profile.eta_q, -2.0 * static_cast<double>(d)) * base;

  // covariance form of the same theorem at its smallest admissible eps,
  // where the left side is largest
  double eps_star = 1.0 - profile.eta_q * profile.eta_q;
  rep.epsilon = eps_star;
  double cov = exact_noise_cov(spec, NoiseParams{eps_star});
  bool cov_form = cov / var <= base + 1e-12;

  rep.holds = (rep.lhs <= rep.rhs + 1e-12) && cov_form;
  return rep;
}

}  // namespace nsflow
