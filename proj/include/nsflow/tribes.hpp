#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "nsflow/space.hpp"

namespace nsflow {

// Blocks of t Rademacher spins; the function fires when some block sums
// exactly to the target a_t. All closed forms below stay exact (up to
// log-gamma roundoff) for t up to 10^6.
struct TribesSpec {
  uint64_t t = 0;
  double gamma = 0.25;  // target growth exponent, a_t ~ t^(1/2+gamma)
  int64_t a_t = 0;      // same parity as t
  double m = 0.0;       // tribe count; 1/p_t overflows integers at large t
  double epsilon = 0.0;
};

// nearest integer to t^(1/2+gamma), shifted by at most 1 onto t's parity;
// ties resolve to the smaller candidate
int64_t choose_a_t(uint64_t t, double gamma);

// fills a_t and, unless given, m = floor(1/p_t)
TribesSpec make_tribes_spec(uint64_t t, double gamma, double epsilon,
                            std::optional<double> m = std::nullopt);

struct TribesStats {
  double p_t = 0.0;      // P(one block hits a_t)
  double m_t = 0.0;
  double r_t = 0.0;      // flip influence on a single block; equals 2 p_t
  double r_t_half = 0.0;  // the halved variant of the optimality computation
  double q_t_eps = 0.0;  // P(block still hits after eps-resampling | it hit)
  double mu_eps = 0.0;    // mean of B+ - B-
  double sigma2_eps = 0.0;
  double i1_flip = 0.0;  // flip influence on the full function
  double cov_exact = 0.0;
  double var_exact = 0.0;
  double w_exact = 0.0;      // sum of squared L1 influences
  double w_classical = 0.0;  // flip convention with the 4p(1-p) prefactor
  double lhs_ratio = 0.0;    // cov/var
  double rhs_ratio = 0.0;  // optimal-exponent rhs with its log correction
};

TribesStats tribes_stats(const TribesSpec& spec);

// 1 if some block of digits (0 -> -1, 1 -> +1) sums to a_t; needs t*m
// coordinates, so only small specs are evaluable
double tribes_evaluate(const TribesSpec& spec, const Config& c);

struct SharpRatioRow {
  uint64_t t = 0;
  int64_t a_t = 0;
  double p_t = 0.0;
  double m_t = 0.0;
  double r_t = 0.0;
  double q_eps = 0.0;
  double cov_exact = 0.0;
  double var_exact = 0.0;
  double w_inf1 = 0.0;
  double w_classical = 0.0;
  double lhs_ratio = 0.0;
  double rhs_ratio = 0.0;   // NaN when W >= Var (pre-asymptotic t)
  double ratio = 0.0;       // lhs/rhs
  double cond1_ratio = 0.0;  // cov / (e^-2 q), tends to 1
  double p_over_q = 0.0;     // tends to 0
};

// sharpness sweep of the optimal exponent along a t grid; the rhs uses
// the classical-influence W by convention
std::vector<SharpRatioRow> sharp_ratio_report(
    double gamma, double epsilon, const std::vector<uint64_t>& t_grid);

}  // namespace nsflow
