#pragma once

#include <functional>
#include <optional>
#include <string>

#include "nsflow/law.hpp"
#include "nsflow/space.hpp"

namespace nsflow {

struct HyperProfile {
  double q = 0.0;
  double m_q = 1.0;        // smallest M with ||g||_q <= M ||g||_2, centred g
  double eta_q = 1.0;      // largest eta with ||a + eta b X||_q <= ||a + b X||_2
  double eta_lower = 0.0;  // 1 / (2 M_q sqrt(q-1))
  double eta_upper = 1.0;  // 1 / sqrt(q-1)
};

// exact up to the dense-search tolerance (1e-8); support size 1 returns 1
double compute_mq(const FiniteLaw& law, double q);

HyperProfile eta_q_estimate(const FiniteLaw& law, double q);

// worst coordinate governs: min eta_q, max M_q over the space's laws
HyperProfile space_profile(const ProductSpace& space, double q);

// (1 - 2/q) * ln(1/(1-eps)) / ln(eta^-2), frozen above eps_bar/2 with
// eps_bar = 1 - eta^2. The uniform variant swaps eta for the law-free
// bracket value 1/(2 M_q sqrt(q-1)) and freezes at its own midpoint.
double gamma_exponent(double eps, double q, double eta_q, bool uniform = false,
                      std::optional<double> m_q = std::nullopt);

// small-eps slope of gamma_exponent
double alpha_exponent(double q, double eta_q);

// sup{q in (2, q_bar] : eta_curve(q)^2 >= 1 - eps}, bisected to 1e-8.
// The curve must be nonincreasing (checked on a 256-point grid).
double q_of_epsilon(double eps, double q_bar,
                    const std::function<double(double)>& eta_curve);

enum class BoundMode {
  general,      // cov/var <= 4 (W/var)^gamma_{eps,q}
  refined,      // cov/var <= (W/var)^(1-2/q(eps)), optimal eta curve
  optimal,      // cov/var <= (W/var)^(eps/(2-eps))
  k_power,      // cov/var <= (W/var)^((1-(1-eps)^K)/(1+(1-eps)^K))
  key_bound,    // degree-mass form, see check_key_bound
  kk_original,  // comparison only: cov <= 20 W_cl^(0.234 eps), binary coords
  vh,           // synonym of optimal (historical variance-normalized form)
};

const char* bound_mode_name(BoundMode mode);

struct BoundReport {
  BoundMode mode = BoundMode::optimal;
  double epsilon = 0.0;
  double q = 0.0;
  double eta_q = 0.0;
  double exponent_used = 0.0;
  double lhs = 0.0;
  double rhs = 0.0;
  bool holds = false;
  int degree = -1;  // key_bound only
  int k_param = 1;  // k_power only
};

// lhs is cov/var except in kk_original mode, which reports the historical
// unnormalized inequality. holds <=> lhs <= rhs + 1e-12.
BoundReport check_bound(const TabulatedFunction& f, double eps, BoundMode mode,
                        const HyperProfile& profile, int k_param = 1);

// eq family in degree form: lhs = sum_{1<=l<=d} ||f^(l)||^2 / var,
// rhs = eta^(-2d) (W/var)^(1-2/q). holds also requires the covariance
// form at eps = 1 - eta^2 to pass.
BoundReport check_key_bound(const TabulatedFunction& f, size_t d,
                            const HyperProfile& profile);

}  // namespace nsflow
