#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <vector>

#include "doctest.h"
#include "nsflow/errors.hpp"
#include "nsflow/law.hpp"
#include "nsflow/polymer.hpp"
#include "nsflow/rng.hpp"

using namespace nsflow;

namespace {

double rel(double got, double want) {
  return std::fabs(got - want) / std::fabs(want);
}

TestFunction2D box_profile() {
  return {[](double x, double y) {
            return std::max(std::fabs(x), std::fabs(y)) <= 1.0 ? 1.0 : 0.0;
          },
          1.0};
}

TestFunction2D cone_profile() {
  return {[](double x, double y) {
            return std::max(0.0, 1.0 - std::max(std::fabs(x), std::fabs(y)));
          },
          1.0};
}

// centred, unit variance, reaches overlap weights up to 3
FiniteLaw three_point() {
  const double r2 = std::sqrt(2.0);
  return make_finite_law({-r2, 0.0, r2}, {0.25, 0.5, 0.25});
}

}  // namespace

TEST_CASE("walk kernel matches the one-dimensional factorisation") {
  const HeatKernelTable q1 = srw_kernel(1, 4);
  CHECK(q1.q(1, 0) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(q1.q(-1, 0) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(q1.q(0, 1) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(q1.q(0, -1) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(q1.q(0, 0) == 0.0);
  CHECK(q1.q(5, 0) == 0.0);

  const HeatKernelTable q2 = srw_kernel(2, 6);
  CHECK(q2.q(0, 0) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(q2.q(1, 1) == doctest::Approx(0.125).epsilon(1e-15));
  CHECK(q2.q(2, 0) == doctest::Approx(0.0625).epsilon(1e-15));

  const HeatKernelTable q3 = srw_kernel(3, 8);
  CHECK(q3.q(1, 0) == doctest::Approx(0.140625).epsilon(1e-15));
  const HeatKernelTable q4 = srw_kernel(4, 8);
  CHECK(q4.q(0, 0) == doctest::Approx(0.140625).epsilon(1e-15));
  CHECK(q4.q(2, 2) == doctest::Approx(0.0234375).epsilon(1e-15));
  const HeatKernelTable q5 = srw_kernel(5, 10);
  CHECK(q5.q(3, 0) == doctest::Approx(0.0244140625).epsilon(1e-15));
  const HeatKernelTable q16 = srw_kernel(16, 20);
  CHECK(rel(q16.q(0, 0), 0.03856534603983164) < 1e-12);

  // parity: n + x + y must be even for any mass
  for (int64_t x = -3; x <= 3; ++x)
    for (int64_t y = -3; y <= 3; ++y)
      if ((3 + x + y) % 2 != 0) CHECK(q3.q(x, y) == 0.0);

  // Chapman-Kolmogorov through the table
  for (int64_t x = -4; x <= 4; ++x)
    for (int64_t y = -4; y <= 4; ++y) {
      double conv = 0.0;
      for (int64_t ux = -2; ux <= 2; ++ux)
        for (int64_t uy = -2; uy <= 2; ++uy)
          conv += q2.q(ux, uy) * q2.q(x - ux, y - uy);
      CHECK(std::fabs(conv - q4.q(x, y)) < 1e-14);
    }

  // squared-kernel identity behind the overlap recursion
  double sq = 0.0;
  for (int64_t x = -3; x <= 3; ++x)
    for (int64_t y = -3; y <= 3; ++y) sq += q3.q(x, y) * q3.q(x, y);
  const HeatKernelTable q6 = srw_kernel(6, 8);
  CHECK(std::fabs(sq - q6.q(0, 0)) < 1e-14);
  CHECK(q6.q(0, 0) == doctest::Approx(0.09765625).epsilon(1e-15));

  CHECK(rel(srw_kernel(16, 40).mass, 1.0) < 1e-12);
  const double clipped = srw_kernel(16, 2).mass;
  CHECK(clipped < 1.0);
  CHECK(clipped > 0.0);

  CHECK_THROWS_AS(srw_kernel(4, 0), OutOfRange);
  CHECK_THROWS_AS(srw_kernel(4, 5000), CapExceeded);
}

TEST_CASE("overlap sums follow the central-binomial recursion") {
  CHECK(overlap_R(1) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(overlap_R(2) == doctest::Approx(0.390625).epsilon(1e-15));
  CHECK(overlap_R(4) == doctest::Approx(0.56304931640625).epsilon(1e-14));
  CHECK(rel(overlap_R(8), 0.7569446051493287) < 1e-12);
  CHECK(rel(overlap_R(16), 0.963464831208963) < 1e-12);
  CHECK(rel(overlap_R(32), 1.1768451572496956) < 1e-12);
  CHECK(rel(overlap_R(1024), 2.272864923889632) < 1e-10);
  CHECK(rel(overlap_R(4096), 2.7139613350728014) < 1e-10);

  double prev = 0.0;
  for (uint64_t n = 1; n <= 64; ++n) {
    const double r = overlap_R(n);
    CHECK(r > prev);
    prev = r;
  }

  // agreement with the kernel table term by term
  double acc = 0.0;
  for (uint64_t n = 1; n <= 4; ++n) {
    acc += srw_kernel(2 * n, 10).q(0, 0);
    CHECK(std::fabs(acc - overlap_R(n)) < 1e-14);
  }

  // logarithmic growth: within 15% of ln(N)/pi at 4096, improving after
  const double pi = 3.14159265358979323846;
  const double r4096 = overlap_R(4096) / (std::log(4096.0) / pi);
  const double r16384 = overlap_R(16384) / (std::log(16384.0) / pi);
  CHECK(std::fabs(r4096 - 1.0) < 0.15);
  CHECK(std::fabs(r16384 - 1.0) < std::fabs(r4096 - 1.0));

  CHECK_THROWS_AS(overlap_R(0), OutOfRange);
}

TEST_CASE("coincidence count of two walks matches the overlap sum") {
  RngStream stream(2026, 0, 0x706f6c796d6f6eULL);
  const uint64_t pairs = 100000;
  const uint64_t steps = 32;
  double sum = 0.0, sum2 = 0.0;
  for (uint64_t i = 0; i < pairs; ++i) {
    int64_t ax = 0, ay = 0, bx = 0, by = 0;
    uint64_t hits = 0;
    for (uint64_t n = 0; n < steps; ++n) {
      const uint32_t da = stream.next_u32() >> 30;
      const uint32_t db = stream.next_u32() >> 30;
      ax += (da == 0) - (da == 1);
      ay += (da == 2) - (da == 3);
      bx += (db == 0) - (db == 1);
      by += (db == 2) - (db == 3);
      hits += (ax == bx && ay == by);
    }
    sum += (double)hits;
    sum2 += (double)hits * (double)hits;
  }
  const double mean = sum / (double)pairs;
  const double var = (sum2 - sum * sum / (double)pairs) / ((double)pairs - 1);
  const double se = std::sqrt(var / (double)pairs);
  CHECK(std::fabs(mean - overlap_R(steps)) < 3.0 * se);
}

TEST_CASE("inverse temperature solves the overlap weight equation") {
  const FiniteLaw pm1 = rademacher_law();
  CHECK(std::fabs(solve_beta(pm1, 0.25) - 0.54930614433405485) < 1e-10);
  CHECK(std::fabs(solve_beta(pm1, 0.5) - 0.88137358701954303) < 1e-10);
  CHECK(std::fabs(solve_beta(pm1, 0.9) - 1.8184464592320669) < 1e-10);
  CHECK(solve_beta(pm1, 0.0) == 0.0);
  CHECK(solve_beta(pm1, 1e-10) > 0.0);
  CHECK(solve_beta(pm1, 1e-10) < 1e-4);
  CHECK_THROWS_AS(solve_beta(pm1, 1.0), NoRoot);
  CHECK_THROWS_AS(solve_beta(pm1, 1.5), NoRoot);
  CHECK_THROWS_AS(solve_beta(pm1, -0.1), OutOfRange);

  const FiniteLaw tp = three_point();
  for (double target : {0.05, 0.7, 1.6387581931927241, 2.9}) {
    const double b = solve_beta(tp, target);
    const double got = std::expm1(log_mgf(tp, 2 * b) - 2 * log_mgf(tp, b));
    CHECK(std::fabs(got - target) < 1e-10);
  }
  CHECK_THROWS_AS(solve_beta(tp, 3.0), NoRoot);
  CHECK_THROWS_AS(solve_beta(make_finite_law({0.0}, {1.0}), 0.5),
                  DegenerateLaw);
}

TEST_CASE("parameter derivation pins the temperature to the overlap") {
  const PolymerParams p16 = make_polymer_params(16, -1.0, rademacher_law());
  CHECK(rel(p16.overlap, 0.963464831208963) < 1e-12);
  CHECK(rel(p16.sigma, 0.81459798505007962) < 1e-10);
  CHECK(std::fabs(p16.beta - 1.1405463525648516) < 1e-10);
  CHECK(std::fabs(p16.lambda_beta - 0.54468240522204043) < 1e-10);
  CHECK(rel(p16.mean_abs_zeta, std::tanh(p16.beta)) < 1e-12);
  CHECK(rel(p16.mean_abs_zeta, p16.sigma) < 1e-10);
  CHECK(p16.box_radius == 32);

  const PolymerParams p8 = make_polymer_params(8, 0.5, three_point());
  CHECK(std::fabs(p8.beta - 1.5160085069690444) < 1e-10);
  CHECK(std::fabs(p8.lambda_beta - 0.9792984156087496) < 1e-10);
  CHECK(rel(p8.mean_abs_zeta, 1.1024187316694493) < 1e-10);
  CHECK(rel(p8.sigma, 1.2801399115693269) < 1e-10);
  CHECK(p8.mean_abs_zeta < p8.sigma);
  CHECK(p8.box_radius == 23);
  const double wt = std::expm1(log_mgf(three_point(), 2 * p8.beta) -
                               2 * log_mgf(three_point(), p8.beta));
  CHECK(std::fabs(wt - p8.sigma * p8.sigma) < 1e-10);

  CHECK_THROWS_AS(make_polymer_params(1, 0.0, rademacher_law()), OutOfRange);
  // the pm1 law cannot reach sigma^2 = 1/R_8 > 1
  CHECK_THROWS_AS(make_polymer_params(8, 0.0, rademacher_law()), NoRoot);
  CHECK_THROWS_AS(make_polymer_params(16, -std::log(16.0), rademacher_law()),
                  OutOfRange);
  CHECK_THROWS_AS(make_polymer_params(16, 0.0, rademacher_law(), 0.0),
                  OutOfRange);
  CHECK_THROWS_AS(make_polymer_params(16, 0.0, rademacher_law(), 1e-10, 0.0),
                  OutOfRange);
  CHECK_THROWS_AS(make_polymer_params(16, -1.0, biased_pm1_law(0.3)),
                  OutOfRange);
}

TEST_CASE("annealed partition value equals the kernel contraction") {
  const PolymerParams p16 = make_polymer_params(16, -1.0, rademacher_law());
  const double z0 = partition_mean(p16, cone_profile(), box_profile());
  CHECK(rel(z0, 0.8914062157855369) < 1e-10);

  // independent path: direct contraction with the 16-step kernel
  const HeatKernelTable q16 = srw_kernel(16, 24);
  double direct = 0.0;
  for (int64_t xx = -4; xx <= 4; ++xx)
    for (int64_t xy = -4; xy <= 4; ++xy) {
      const double g =
          std::max(0.0, 1.0 - std::max(std::fabs(xx), std::fabs(xy)) / 4.0);
      if (g == 0.0) continue;
      for (int64_t yx = -4; yx <= 4; ++yx)
        for (int64_t yy = -4; yy <= 4; ++yy)
          direct += g * q16.q(yx - xx, yy - xy);
    }
  direct /= 16.0;
  CHECK(rel(z0, direct) < 1e-10);

  // inner window: layers 5..12 only
  const double zw =
      partition_mean(p16, cone_profile(), box_profile(), 0.25, 0.75);
  CHECK(rel(zw, 1.0949630737304688) < 1e-10);

  const PolymerParams p8 = make_polymer_params(8, 0.5, three_point());
  const double z8 = partition_mean(p8, box_profile(), box_profile());
  CHECK(rel(z8, 1.4650802612304688) < 1e-10);

  CHECK_THROWS_AS(partition_mean(p16, cone_profile(), box_profile(), 0.5, 0.5),
                  OutOfRange);
  CHECK_THROWS_AS(partition_mean(p16, cone_profile(), box_profile(), 0.0, 1.2),
                  OutOfRange);
  CHECK_THROWS_AS(
      partition_mean(p16, cone_profile(), box_profile(), 0.01, 0.02),
      OutOfRange);
  TestFunction2D wide = box_profile();
  wide.support_radius = 100.0;
  CHECK_THROWS_AS(partition_mean(p16, wide, box_profile()), SupportEscape);
}

TEST_CASE("disorder fields are lazy, deterministic and well-distributed") {
  const PolymerParams p = make_polymer_params(16, -1.0, rademacher_law());
  const DisorderField f = make_disorder_field(p, 2026, 7);
  const DisorderField same = make_disorder_field(p, 2026, 7);
  const DisorderField other = make_disorder_field(p, 2026, 8);

  uint64_t diff = 0, ones = 0, total = 0;
  std::vector<uint8_t> row(size_t(2 * p.box_radius + 1));
  for (uint64_t n = 1; n <= 16; ++n)
    for (int64_t y = -p.box_radius; y <= p.box_radius; ++y) {
      f.fill_atoms(n, y, -p.box_radius, p.box_radius, row.data());
      for (int64_t x = -p.box_radius; x <= p.box_radius; ++x) {
        const uint32_t a = row[size_t(x + p.box_radius)];
        CHECK(a == same.atom(n, x, y));
        if (a != other.atom(n, x, y)) ++diff;
        ones += a;
        ++total;
      }
    }
  CHECK(diff > total / 3);  // independent replicates disagree half the time
  const double frac = (double)ones / (double)total;
  CHECK(std::fabs(frac - 0.5) < 4.0 / std::sqrt((double)total));

  CHECK_THROWS_AS(f.atom(0, 0, 0), CoordinateOutOfRange);
  CHECK_THROWS_AS(f.atom(17, 0, 0), CoordinateOutOfRange);
  CHECK_THROWS_AS(f.atom(1, p.box_radius + 1, 0), CoordinateOutOfRange);

  // three-atom law goes through the inverse-cdf path with sane frequencies
  const PolymerParams p3 = make_polymer_params(8, 0.5, three_point());
  const DisorderField f3 = make_disorder_field(p3, 11, 0);
  uint64_t counts[3] = {0, 0, 0};
  for (uint64_t n = 1; n <= 8; ++n)
    for (int64_t y = -20; y <= 20; ++y)
      for (int64_t x = -20; x <= 20; ++x) ++counts[f3.atom(n, x, y)];
  const double tot3 = (double)(8 * 41 * 41);
  CHECK(std::fabs((double)counts[0] / tot3 - 0.25) < 0.02);
  CHECK(std::fabs((double)counts[1] / tot3 - 0.50) < 0.02);
  CHECK(std::fabs((double)counts[2] / tot3 - 0.25) < 0.02);
}

TEST_CASE("resampling keeps sites at rate one minus epsilon") {
  const PolymerParams p = make_polymer_params(16, -1.0, rademacher_law());
  const DisorderField base = make_disorder_field(p, 99, 3);

  const ResampledField all = make_resampled(base, 0.0);
  for (int64_t x = -20; x <= 20; ++x)
    CHECK(all.atom(5, x, 2) == base.atom(5, x, 2));

  // epsilon = 1 redraws everything: disagreement rate should be ~1/2
  const ResampledField none = make_resampled(base, 1.0);
  uint64_t diff = 0, tot = 0;
  for (uint64_t n = 1; n <= 16; ++n)
    for (int64_t y = -25; y <= 25; ++y)
      for (int64_t x = -25; x <= 25; ++x) {
        diff += none.atom(n, x, y) != base.atom(n, x, y);
        ++tot;
      }
  CHECK(std::fabs((double)diff / (double)tot - 0.5) <
        4.0 / std::sqrt((double)tot));

  // for pm1 the observable disagreement rate is eps/2
  const ResampledField half = make_resampled(base, 0.5);
  diff = 0;
  for (uint64_t n = 1; n <= 16; ++n)
    for (int64_t y = -25; y <= 25; ++y)
      for (int64_t x = -25; x <= 25; ++x)
        diff += half.atom(n, x, y) != base.atom(n, x, y);
  CHECK(std::fabs((double)diff / (double)tot - 0.25) <
        4.0 / std::sqrt((double)tot));

  const ResampledField again = make_resampled(base, 0.5);
  CHECK(again.atom(3, 1, -2) == half.atom(3, 1, -2));

  CHECK_THROWS_AS(make_resampled(base, -0.1), OutOfRange);
  CHECK_THROWS_AS(make_resampled(base, 1.5), OutOfRange);
}

TEST_CASE("quenched partition values are reproducible and unbiased") {
  const PolymerParams p =
      make_polymer_params(32, 0.0, rademacher_law(), 1e-6);
  const TestFunction2D g = box_profile(), h = box_profile();

  const DisorderField f0 = make_disorder_field(p, 5, 0);
  const PartitionResult a = partition_function(f0, p, g, h);
  const PartitionResult b = partition_function(f0, p, g, h);
  CHECK(a.value == b.value);
  CHECK(a.replicate == 0);
  CHECK(a.seed == 5);
  const PartitionResult c =
      partition_function(make_disorder_field(p, 5, 1), p, g, h);
  CHECK(c.value != a.value);

  const ResampledField r0 = make_resampled(f0, 0.0);
  CHECK(partition_function(r0, p, g, h).value == a.value);
  const ResampledField r1 = make_resampled(f0, 0.3);
  const double rv = partition_function(r1, p, g, h).value;
  CHECK(rv != a.value);
  CHECK(rv == partition_function(make_resampled(f0, 0.3), p, g, h).value);

  // weights have unit mean per site, so E Z equals the annealed value
  const double z0 = partition_mean(p, g, h);
  const uint64_t reps = 3000;
  double sum = 0.0, sum2 = 0.0;
  for (uint64_t i = 0; i < reps; ++i) {
    const double z =
        partition_function(make_disorder_field(p, 2101, i), p, g, h).value;
    CHECK(z > 0.0);
    sum += z;
    sum2 += z * z;
  }
  const double mean = sum / (double)reps;
  const double var = (sum2 - sum * sum / (double)reps) / ((double)reps - 1);
  const double se = std::sqrt(var / (double)reps);
  CHECK(std::fabs(mean - z0) < 3.0 * se);
  CHECK(var > 0.0);
}

TEST_CASE("site influence factorises through the heat kernels") {
  const PolymerParams p16 = make_polymer_params(16, -1.0, rademacher_law());
  const TestFunction2D g = cone_profile(), h = box_profile();

  const PolymerInfluence i5 = polymer_influence(p16, g, h, 5, 1, 2);
  CHECK(rel(i5.exact, 0.01587386900061764) < 1e-10);
  CHECK(rel(i5.exact, i5.bound) < 1e-12);  // pm1: E|zeta| equals sigma
  const PolymerInfluence i16 = polymer_influence(p16, g, h, 16, 0, 0);
  CHECK(rel(i16.exact, 0.01558378138438104) < 1e-10);
  CHECK(rel(i16.exact, i16.bound) < 1e-12);

  const PolymerInfluence off = polymer_influence(p16, g, h, 0, 0, 0);
  CHECK(off.exact == 0.0);
  CHECK(off.bound == 0.0);
  CHECK(polymer_influence(p16, g, h, 17, 0, 0).exact == 0.0);
  CHECK(polymer_influence(p16, g, h, 5, p16.box_radius + 3, 0).exact == 0.0);

  // three-point disorder: strictly below the kernel bound
  const PolymerParams p8 = make_polymer_params(8, 0.5, three_point());
  const PolymerInfluence j =
      polymer_influence(p8, box_profile(), box_profile(), 3, 2, -1);
  CHECK(rel(j.exact, 0.042348314773221416) < 1e-10);
  CHECK(rel(j.bound, 0.049175296438229073) < 1e-10);
  CHECK(j.exact < j.bound);
  CHECK(rel(j.exact / j.bound, 0.86117050308820643) < 1e-10);

  TestFunction2D signed_g = {[](double x, double y) {
                               return 0.5 - std::max(0.0, 1.0 - std::max(
                                                              std::fabs(x),
                                                              std::fabs(y)));
                             },
                             1.0};
  CHECK_THROWS_AS(polymer_influence(p16, signed_g, h, 5, 0, 0),
                  SignedTestFunction);
  CHECK(polymer_influence_bound(p16, signed_g, h, 5, 0, 0) > 0.0);
}

TEST_CASE("influence agrees with the covariance estimator for pm1 sites") {
  // Z is affine in each site weight with a nonnegative coefficient, so
  // E|delta Z| equals E[Z * omega] for pm1 disorder
  const PolymerParams p =
      make_polymer_params(8, -1.0, rademacher_law(), 1e-6);
  const TestFunction2D g = box_profile(), h = box_profile();
  const PolymerInfluence inf = polymer_influence(p, g, h, 4, 0, 0);

  const uint64_t reps = 20000;
  double sum = 0.0, sum2 = 0.0;
  for (uint64_t i = 0; i < reps; ++i) {
    const DisorderField f = make_disorder_field(p, 424242, i);
    const double z = partition_function(f, p, g, h).value;
    const double w = p.disorder.atom(f.atom(4, 0, 0));
    const double v = z * w;
    sum += v;
    sum2 += v * v;
  }
  const double mean = sum / (double)reps;
  const double var = (sum2 - sum * sum / (double)reps) / ((double)reps - 1);
  const double se = std::sqrt(var / (double)reps);
  CHECK(std::fabs(mean - inf.exact) < 3.0 * se);
  CHECK(inf.exact > 3.0 * se);  // the comparison actually resolves the value
}

TEST_CASE("total squared influence matches the direct double sum") {
  const PolymerParams p16 = make_polymer_params(16, -1.0, rademacher_law());
  const double w16 = polymer_W(p16, cone_profile(), box_profile());
  CHECK(rel(w16, 0.14199684148817508) < 1e-10);

  const PolymerParams p8 = make_polymer_params(8, 0.5, three_point());
  const double w8 = polymer_W(p8, box_profile(), box_profile());
  CHECK(rel(w8, 0.73688146910824535) < 1e-10);

  // brute-force cross-check through the public influence evaluator
  long double acc = 0.0L;
  for (uint64_t n = 1; n <= 8; ++n)
    for (int64_t x = -12; x <= 12; ++x)
      for (int64_t y = -12; y <= 12; ++y) {
        const double v =
            polymer_influence(p8, box_profile(), box_profile(), n, x, y)
                .exact;
        acc += (long double)v * v;
      }
  CHECK(rel(w8, (double)acc) < 1e-9);

  TestFunction2D signed_g = {[](double x, double y) { return x < 0 ? -1.0 : 1.0; },
                             1.0};
  CHECK_THROWS_AS(polymer_W(p16, signed_g, box_profile()),
                  SignedTestFunction);
}

TEST_CASE("noise covariance of partition values decays in epsilon") {
  const PolymerParams p =
      make_polymer_params(8, 0.5, three_point(), 1e-6);
  std::vector<ZSpec> specs;
  specs.push_back({box_profile(), box_profile(), 0.0, 1.0});

  const McCovResult v0 = mc_polymer_noise_cov(p, specs, 0.0, 20000, 77, 1);
  const McCovResult vh = mc_polymer_noise_cov(p, specs, 0.5, 20000, 77, 1);
  const McCovResult v1 = mc_polymer_noise_cov(p, specs, 1.0, 20000, 77, 1);
  CHECK(v0.value > 4.0 * v0.std_error);  // variance clearly positive
  CHECK(std::fabs(v1.value) < 3.0 * v1.std_error);  // independent copies
  CHECK(v0.value > vh.value - 3.0 * (v0.std_error + vh.std_error));
  CHECK(vh.value > v1.value - 3.0 * (vh.std_error + v1.std_error));
  CHECK(v0.value - v1.value >
        2.0 * (v0.std_error + v1.std_error));  // endpoints separate
  CHECK(v0.samples == 20000);

  // worker count must not change the result
  const McCovResult v3 = mc_polymer_noise_cov(p, specs, 0.5, 20000, 77, 3);
  CHECK(v3.value == vh.value);
  CHECK(v3.std_error == vh.std_error);

  // bounded post-processing keeps everything finite and reproducible
  const auto squash = [](const std::vector<double>& z) {
    return std::tanh(z[0]);
  };
  const McCovResult t1 =
      mc_polymer_noise_cov(p, specs, 0.5, 4000, 13, 1, squash, squash);
  const McCovResult t2 =
      mc_polymer_noise_cov(p, specs, 0.5, 4000, 13, 2, squash, squash);
  CHECK(t1.value == t2.value);
  CHECK(std::fabs(t1.value) < 1.0);

  CHECK_THROWS_AS(mc_polymer_noise_cov(p, {}, 0.5, 100, 1), OutOfRange);
  CHECK_THROWS_AS(mc_polymer_noise_cov(p, specs, 1.5, 100, 1), OutOfRange);
  CHECK_THROWS_AS(mc_polymer_noise_cov(p, specs, 0.5, 1, 1), OutOfRange);
}

TEST_CASE("white noise pairing has exact variance and zero mean") {
  const PolymerParams p = make_polymer_params(16, -1.0, rademacher_law());
  SpaceTimeFunction rho = {[](double t, double x, double y) {
                             return (1.0 - t) *
                                    std::max(0.0, 1.0 - std::max(
                                                            std::fabs(x),
                                                            std::fabs(y)));
                           },
                           1.0};
  const double v = xi_variance(p, rho);
  CHECK(rel(v, 0.2081298828125) < 1e-12);

  const uint64_t reps = 4000;
  double sum = 0.0, sum2 = 0.0;
  for (uint64_t i = 0; i < reps; ++i) {
    const double xi =
        white_noise_functional(make_disorder_field(p, 31337, i), p, rho);
    sum += xi;
    sum2 += xi * xi;
  }
  const double mean = sum / (double)reps;
  const double svar = (sum2 - sum * sum / (double)reps) / ((double)reps - 1);
  CHECK(std::fabs(mean) < 3.0 * std::sqrt(v / (double)reps));
  CHECK(std::fabs(svar - v) < 4.0 * v * std::sqrt(2.0 / (double)reps));

  SpaceTimeFunction zero = {[](double, double, double) { return 0.0; }, 0.5};
  CHECK(white_noise_functional(make_disorder_field(p, 1, 0), p, zero) == 0.0);
  CHECK(xi_variance(p, zero) == 0.0);

  SpaceTimeFunction wide = rho;
  wide.support_radius = 100.0;
  CHECK_THROWS_AS(xi_variance(p, wide), SupportEscape);
  CHECK_THROWS_AS(
      white_noise_functional(make_disorder_field(p, 1, 0), p, wide),
      SupportEscape);
}

TEST_CASE("joint decorrelation diagnostic reports monomial trends") {
  SpaceTimeFunction rho = {[](double t, double x, double y) {
                             return (1.0 - t) *
                                    std::max(0.0, 1.0 - std::max(
                                                            std::fabs(x),
                                                            std::fabs(y)));
                           },
                           1.0};
  const auto squash = [](double u) { return std::tanh(u); };
  const IndependenceReport rep = independence_diagnostic(
      {8, 16}, -1.0, rademacher_law(), box_profile(), box_profile(), {rho}, 2,
      squash, 2000, 555, 1);
  REQUIRE(rep.rows.size() == 4);  // two lengths, exponents {1} and {2}
  CHECK(rep.rows[0].length == 8);
  CHECK(rep.rows[2].length == 16);
  CHECK(rep.rows[0].exponents == std::vector<uint64_t>{1});
  CHECK(rep.rows[1].exponents == std::vector<uint64_t>{2});
  for (const IndependenceRow& r : rep.rows) {
    CHECK(r.std_error > 0.0);
    CHECK(std::fabs(r.cov) < 1.0);
  }

  const IndependenceReport again = independence_diagnostic(
      {8, 16}, -1.0, rademacher_law(), box_profile(), box_profile(), {rho}, 2,
      squash, 2000, 555, 2);
  for (size_t i = 0; i < rep.rows.size(); ++i) {
    CHECK(again.rows[i].cov == rep.rows[i].cov);
    CHECK(again.rows[i].std_error == rep.rows[i].std_error);
  }
  CHECK(again.decoupled == rep.decoupled);

  CHECK_THROWS_AS(
      independence_diagnostic({}, 0.0, rademacher_law(), box_profile(),
                              box_profile(), {rho}, 2, squash, 100, 1, 1),
      OutOfRange);
  CHECK_THROWS_AS(
      independence_diagnostic({16}, -1.0, rademacher_law(), box_profile(),
                              box_profile(), {}, 2, squash, 100, 1, 1),
      OutOfRange);
}

TEST_CASE("field dumps are atomic, versioned and byte-stable") {
  const PolymerParams p = make_polymer_params(4, 0.0, three_point(), 0.1);
  const DisorderField f = make_disorder_field(p, 8, 2);
  const int64_t side = 2 * p.box_radius + 1;
  const std::string path = "/tmp/nsflow_field_test.bin";
  dump_disorder_field(f, path);

  FILE* fp = std::fopen(path.c_str(), "rb");
  REQUIRE(fp != nullptr);
  char magic[4];
  uint32_t version = 0, n32 = 0;
  int32_t r32 = 0;
  REQUIRE(std::fread(magic, 1, 4, fp) == 4);
  REQUIRE(std::fread(&version, 4, 1, fp) == 1);
  REQUIRE(std::fread(&n32, 4, 1, fp) == 1);
  REQUIRE(std::fread(&r32, 4, 1, fp) == 1);
  CHECK(magic[0] == 'N');
  CHECK(magic[1] == 'S');
  CHECK(magic[2] == 'P');
  CHECK(magic[3] == 'F');
  CHECK(version == 1);
  CHECK(n32 == 4);
  CHECK(r32 == p.box_radius);
  std::vector<uint8_t> body(size_t(4 * side * side));
  REQUIRE(std::fread(body.data(), 1, body.size(), fp) == body.size());
  CHECK(std::fgetc(fp) == EOF);
  std::fclose(fp);

  // layer-major, row-major site order
  size_t at = 0;
  bool all_match = true;
  for (uint64_t n = 1; n <= 4; ++n)
    for (int64_t y = -p.box_radius; y <= p.box_radius; ++y)
      for (int64_t x = -p.box_radius; x <= p.box_radius; ++x)
        all_match = all_match && body[at++] == f.atom(n, x, y);
  CHECK(all_match);

  FILE* tmp = std::fopen((path + ".tmp").c_str(), "rb");
  CHECK(tmp == nullptr);
  if (tmp) std::fclose(tmp);
  std::remove(path.c_str());
}
