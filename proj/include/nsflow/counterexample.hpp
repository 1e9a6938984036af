#pragma once

#include <cstdint>
#include <vector>

#include "nsflow/space.hpp"

namespace nsflow {

// Counting family on the N-atom uniform product space: each of N coordinates
// draws uniformly from N atoms and f counts the hits on the first atom. The
// chaos expansion stops at degree 1, so the noise covariance is (1-eps)*Var
// for every eps while the influence weight decays like 4/N. The family shows
// vanishing W alone does not force noise sensitivity: the uniform moment
// ratio ||Y-EY||_q / ||Y-EY||_2 grows like N^{1/2-1/q}.
struct CounterexampleRow {
  uint64_t n_coords = 0;   // N, also the atom count per coordinate
  double variance = 0.0;   // 1 - 1/N
  double cov_ratio = 0.0;  // Cov[f(w^eps), f(w)] / Var[f], equals 1 - eps
  double cov = 0.0;        // cov_ratio * variance
  double inf1 = 0.0;       // per-coordinate L1 influence, (2/N)(1 - 1/N)
  double w_total = 0.0;    // N * inf1^2 = (4/N)(1 - 1/N)^2
  double w_bound = 0.0;    // 4 / N; w_total <= w_bound also as doubles
  double mq_lower = 0.0;   // ||Y - EY||_q / ||Y - EY||_2 for one summand
  double mq_rate = 0.0;    // N^{1/2 - 1/q}
};

// Closed-form rows, one per requested size. Sizes need not be enumerable:
// everything is analytic in N. Requires every size >= 2, eps in [0, 1],
// q >= 1.
std::vector<CounterexampleRow> counterexample_demo(
    const std::vector<uint64_t>& sizes, double epsilon, double q = 4.0);

// The same function as a dense table for small N, so the generic chaos and
// noise machinery can audit the closed forms by enumeration. Space cap is
// the usual 2^24 configs (N^N here, so N <= 8).
TabulatedFunction counterexample_function(uint64_t n);

}  // namespace nsflow
