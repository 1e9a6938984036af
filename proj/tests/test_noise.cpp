#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "doctest.h"
#include "nsflow/chaos.hpp"
#include "nsflow/errors.hpp"
#include "nsflow/noise.hpp"
#include "nsflow/space.hpp"

using namespace nsflow;

namespace {

TabulatedFunction rand_table(const SpacePtr& sp, RngStream& s) {
  TabulatedFunction f{sp, std::vector<double>(sp->config_count())};
  for (double& v : f.values) v = 2.0 * s.next_unit() - 1.0;
  return f;
}

SpacePtr rand_space(RngStream& s, size_t max_n) {
  std::vector<FiniteLaw> laws;
  const size_t n = 1 + size_t(s.next_u32() % max_n);
  for (size_t k = 0; k < n; ++k) {
    const uint32_t pick = s.next_u32() % 3;
    if (pick == 0)
      laws.push_back(rademacher_law());
    else if (pick == 1)
      laws.push_back(biased_pm1_law(0.25 + 0.5 * s.next_unit()));
    else
      laws.push_back(make_finite_law({-1.0, 0.0, 1.0}, {0.25, 0.4, 0.35}));
  }
  return product_space(laws);
}

TabulatedFunction parity(size_t n) {
  SpacePtr sp = rademacher_space(n);
  return tabulate(sp, [&, n](const Config& c) {
    double p = 1.0;
    for (size_t k = 0; k < n; ++k) p *= sp->law(k).atom(c.idx[k]);
    return p;
  });
}

}  // namespace

TEST_CASE("exact covariance on pinned spectra") {
  TabulatedFunction par3 = parity(3);
  VarianceSpectrum s3 = variance_spectrum(par3);
  CHECK(exact_noise_cov(s3, {0.5}) == doctest::Approx(0.125).epsilon(1e-13));
  CHECK(exact_noise_cov(s3, {0.0}) == doctest::Approx(1.0).epsilon(1e-13));
  CHECK(exact_noise_cov(s3, {1.0}) == doctest::Approx(0.0));

  SpacePtr sp = rademacher_space(3);
  TabulatedFunction maj = tabulate(sp, [&](const Config& c) {
    double s = 0.0;
    for (size_t k = 0; k < 3; ++k) s += sp->law(k).atom(c.idx[k]);
    return s > 0 ? 1.0 : -1.0;
  });
  VarianceSpectrum ms = variance_spectrum(maj);
  CHECK(exact_noise_cov(ms, {0.5}) ==
        doctest::Approx(0.40625).epsilon(1e-13));
}

TEST_CASE("exact equals brute force on random corpora") {
  RngStream rng(101, 0);
  const double eps_list[4] = {0.0, 0.17, 0.5, 1.0};
  for (int rep = 0; rep < 200; ++rep) {
    SpacePtr sp = rand_space(rng, 8);
    TabulatedFunction f = rand_table(sp, rng);
    VarianceSpectrum spec = variance_spectrum(f);
    const double scale = std::max(1.0, variance(f));
    for (double eps : eps_list) {
      const double a = exact_noise_cov(spec, {eps});
      const double b = bruteforce_noise_cov(f, {eps});
      CHECK(std::abs(a - b) < 1e-10 * scale);
    }
  }
}

TEST_CASE("covariance endpoints and monotonicity") {
  RngStream rng(102, 0);
  for (int rep = 0; rep < 20; ++rep) {
    SpacePtr sp = rand_space(rng, 6);
    TabulatedFunction f = rand_table(sp, rng);
    VarianceSpectrum spec = variance_spectrum(f);
    CHECK(std::abs(exact_noise_cov(spec, {0.0}) - variance(f)) < 1e-10);
    CHECK(std::abs(exact_noise_cov(spec, {1.0})) < 1e-12);
    double prev = exact_noise_cov(spec, {0.0});
    for (double eps = 0.1; eps <= 1.0; eps += 0.1) {
      const double cur = exact_noise_cov(spec, {eps});
      CHECK(cur <= prev + 1e-12);
      prev = cur;
    }
  }
  // constant function
  SpacePtr sp = rademacher_space(4);
  TabulatedFunction c{sp, std::vector<double>(16, 2.0)};
  CHECK(bruteforce_noise_cov(c, {0.3}) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("resampled conditional mean equals the noise operator") {
  RngStream rng(103, 0);
  for (int rep = 0; rep < 10; ++rep) {
    SpacePtr sp = rand_space(rng, 5);
    TabulatedFunction f = rand_table(sp, rng);
    const double eps = 0.35;
    const size_t n = sp->n();

    // direct enumeration of E[f(w^eps) | w = x] over resample subsets and
    // fresh sub-configurations, no library decomposition involved
    std::vector<double> g(sp->config_count(), 0.0);
    std::vector<uint32_t> idx(n), jdx(n);
    for (uint64_t x = 0; x < sp->config_count(); ++x) {
      sp->decode(x, idx.data());
      double total = 0.0;
      const uint32_t full = uint32_t((1u << n) - 1);
      for (uint32_t s_mask = 0;; ++s_mask) {
        const int sz = __builtin_popcount(s_mask);
        const double w_s =
            std::pow(eps, sz) * std::pow(1.0 - eps, double(n - sz));
        // integrate f over fresh values on the resampled coordinates
        jdx = idx;
        double inner = 0.0;
        std::function<void(size_t, double)> rec = [&](size_t k, double w) {
          if (k == n) {
            inner += w * f.values[sp->encode(jdx.data())];
            return;
          }
          if (!(s_mask & (1u << k))) {
            rec(k + 1, w);
            return;
          }
          for (size_t j = 0; j < sp->law(k).size(); ++j) {
            jdx[k] = uint32_t(j);
            rec(k + 1, w * sp->law(k).prob(j));
          }
          jdx[k] = idx[k];
        };
        rec(0, 1.0);
        total += w_s * inner;
        if (s_mask == full) break;
      }
      g[x] = total;
    }

    ChaosDecomposition dec = efron_stein(f, 0.0);
    TabulatedFunction t = apply_noise_operator(dec, 1.0 - eps);
    for (uint64_t x = 0; x < sp->config_count(); ++x)
      CHECK(std::abs(g[x] - t.values[x]) < 1e-10);
  }
}

TEST_CASE("cross covariance obeys cauchy-schwarz") {
  RngStream rng(104, 0);
  for (int rep = 0; rep < 30; ++rep) {
    SpacePtr sp = rand_space(rng, 6);
    TabulatedFunction f = rand_table(sp, rng);
    TabulatedFunction g = rand_table(sp, rng);
    const double eps = 0.25;
    const size_t n = sp->n();
    const uint32_t full = uint32_t((1u << n) - 1);
    // Cov[f(w^eps), g(w)] by subset enumeration
    double cross = 0.0;
    const double mf = expectation(f), mg = expectation(g);
    for (uint32_t s_mask = 0;; ++s_mask) {
      const int sz = __builtin_popcount(s_mask);
      const double w_s =
          std::pow(eps, sz) * std::pow(1.0 - eps, double(n - sz));
      TabulatedFunction fc = cond_mean(f, full & ~s_mask);
      cross += w_s * (inner_product(fc, g) - mf * mg);
      if (s_mask == full) break;
    }
    const double cf = bruteforce_noise_cov(f, {eps});
    const double cg = bruteforce_noise_cov(g, {eps});
    CHECK(std::abs(cross) <= std::sqrt(cf * cg) + 1e-10);
  }
}

TEST_CASE("resample endpoints and agreement rate") {
  SpacePtr sp = rademacher_space(8);
  RngStream rng(105, 0);
  Config c = sp->sample(rng);

  RngStream r0(1, 0);
  Config same = resample(*sp, c, {0.0}, r0);
  CHECK(same.idx == c.idx);

  // eps=1: the resampled copy is a fresh draw; chi-square its first coord
  RngStream r1(2, 0);
  std::vector<int> counts(2, 0);
  for (int i = 0; i < 20000; ++i) {
    Config fresh = resample(*sp, c, {1.0}, r1);
    ++counts[fresh.idx[0]];
  }
  CHECK(std::abs(counts[0] - 10000) < 4.0 * std::sqrt(20000 * 0.25));

  // eps=0.3: per-coordinate agreement frequency 1 - eps/2 for symmetric binary
  RngStream r2(3, 0);
  const int pairs = 100000;
  std::vector<int> agree(8, 0);
  for (int i = 0; i < pairs; ++i) {
    Config w = sp->sample(r2);
    Config wq = resample(*sp, w, {0.3}, r2);
    for (size_t k = 0; k < 8; ++k)
      if (w.idx[k] == wq.idx[k]) ++agree[k];
  }
  const double want = 1.0 - 0.3 * 0.5;
  const double se = std::sqrt(want * (1.0 - want) / pairs);
  for (size_t k = 0; k < 8; ++k)
    CHECK(std::abs(agree[k] / double(pairs) - want) < 3.0 * se);

  CHECK_THROWS_AS(resample(*sp, c, {1.5}, r2), OutOfRange);
}

TEST_CASE("mc covariance agrees with exact values") {
  TabulatedFunction par8 = parity(8);
  const SpacePtr sp = par8.space;
  auto eval = [&](const Config& c) {
    return par8.values[sp->encode(c.idx.data())];
  };
  McEstimate est = mc_noise_cov(eval, sp, {0.3}, 100000, 4242);
  const double want = std::pow(0.7, 8.0);
  CHECK(est.se > 0.0);
  CHECK(std::abs(est.value - want) < 3.0 * est.se);

  // at eps=0 the paired product is identically 1 for parity, so se is 0 and
  // the only estimation error is the squared empirical mean, order 1/S
  McEstimate at0 = mc_noise_cov(eval, sp, {0.0}, 50000, 7);
  CHECK(std::abs(at0.value - 1.0) < 1e-3);

  auto cst = [](const Config&) { return 1.5; };
  McEstimate c = mc_noise_cov(cst, sp, {0.3}, 5000, 7);
  CHECK(c.value == doctest::Approx(0.0));
  CHECK(c.se == doctest::Approx(0.0));
}

TEST_CASE("mc is deterministic for any worker count") {
  TabulatedFunction par6 = parity(6);
  const SpacePtr sp = par6.space;
  auto eval = [&](const Config& c) {
    return par6.values[sp->encode(c.idx.data())];
  };
  McEstimate a = mc_noise_cov(eval, sp, {0.4}, 20000, 99, 1);
  McEstimate b = mc_noise_cov(eval, sp, {0.4}, 20000, 99, 3);
  McEstimate c = mc_noise_cov(eval, sp, {0.4}, 20000, 99, 8);
  CHECK(a.value == b.value);
  CHECK(a.value == c.value);
  CHECK(a.se == b.se);
  CHECK(a.se == c.se);
}

TEST_CASE("sweep couples epsilons and carries the exact column") {
  TabulatedFunction par6 = parity(6);
  std::vector<double> eps{0.0, 0.2, 0.5, 0.8};
  std::vector<NoiseSweepRow> rows = noise_sweep(par6, eps, 40000, 31337);
  REQUIRE(rows.size() == 4);
  VarianceSpectrum spec = variance_spectrum(par6);
  for (size_t e = 0; e < 4; ++e) {
    CHECK(rows[e].epsilon == eps[e]);
    CHECK(rows[e].cov_exact ==
          doctest::Approx(exact_noise_cov(spec, {eps[e]})).epsilon(1e-12));
    CHECK(std::abs(rows[e].cov_mc - rows[e].cov_exact) <
          3.0 * std::max(rows[e].se, 1e-3));
  }
  // the coupled columns keep the big-picture trend visible
  CHECK(rows[0].cov_mc > rows[3].cov_mc);
}
