#include "nsflow/counterexample.hpp"

#include <cmath>

#include "nsflow/errors.hpp"
#include "nsflow/law.hpp"

namespace nsflow {

std::vector<CounterexampleRow> counterexample_demo(
    const std::vector<uint64_t>& sizes, double epsilon, double q) {
  if (sizes.empty()) throw OutOfRange("need at least one size");
  if (!(epsilon >= 0.0 && epsilon <= 1.0))
    throw OutOfRange("epsilon must lie in [0, 1]");
  if (!(q >= 1.0) || !std::isfinite(q)) throw OutOfRange("need q >= 1");

  std::vector<CounterexampleRow> rows;
  rows.reserve(sizes.size());
  for (uint64_t n : sizes) {
    if (n < 2) throw OutOfRange("need size >= 2");
    const double p = 1.0 / (double)n;
    const double omp = 1.0 - p;
    CounterexampleRow r;
    r.n_coords = n;
    r.variance = omp;  // N * p * (1 - p)
    r.cov_ratio = 1.0 - epsilon;
    r.cov = r.cov_ratio * r.variance;
    r.inf1 = 2.0 * p * omp;
    r.w_bound = 4.0 * p;
    // ordered so the product can only shrink w_bound, keeping the
    // inequality w_total <= w_bound true as doubles for every N
    r.w_total = r.w_bound * (omp * omp);
    r.mq_lower = std::pow(p * std::pow(omp, q) + omp * std::pow(p, q),
                          1.0 / q) /
                 std::sqrt(p * omp);
    r.mq_rate = std::pow((double)n, 0.5 - 1.0 / q);
    rows.push_back(r);
  }
  return rows;
}

TabulatedFunction counterexample_function(uint64_t n) {
  if (n < 2) throw OutOfRange("need size >= 2");
  if (n > 64) throw CapExceeded("counterexample table needs N^N configs");
  std::vector<FiniteLaw> laws((size_t)n, uniform_law((size_t)n));
  auto space = product_space(std::move(laws));
  space->check_cap("counterexample table");
  return tabulate(space, [](const Config& c) {
    double s = 0.0;
    for (uint32_t a : c.idx) s += (a == 0) ? 1.0 : 0.0;
    return s;
  });
}

}  // namespace nsflow
