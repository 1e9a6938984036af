#include "nsflow/influence.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "nsflow/errors.hpp"

namespace nsflow {

namespace {

void validate(const TabulatedFunction& f, const char* op) {
  if (!f.space) throw DimensionMismatch(std::string(op) + ": null space");
  if (f.values.size() != f.space->config_count())
    throw DimensionMismatch(std::string(op) + ": table size mismatch");
}

bool is_boolean(const std::vector<double>& v) {
  for (double x : v)
    if (x != 0.0 && x != 1.0) return false;
  return true;
}

}  // namespace

InfluenceProfile influence_profile(const TabulatedFunction& f) {
  validate(f, "influence_profile");
  const ProductSpace& sp = *f.space;
  sp.check_cap("influence_profile");
  const size_t n = sp.n();

  InfluenceProfile out;
  out.inf1.assign(n, 0.0);
  out.inf2.assign(n, 0.0);

  std::vector<double> fiber_mean(f.values.size());
  for (size_t k = 0; k < n; ++k) {
    const FiniteLaw& law = sp.law(k);
    const uint32_t s = uint32_t(law.size());
    const uint64_t stride = sp.stride(k);
    const uint64_t block = stride * s;
    // broadcast fiber means along coordinate k
    fiber_mean = f.values;
    for (uint64_t base = 0; base < fiber_mean.size(); base += block)
      for (uint64_t t = 0; t < stride; ++t) {
        double* p = fiber_mean.data() + base + t;
        double m = 0.0;
        for (uint32_t j = 0; j < s; ++j)
          m += law.prob(j) * p[uint64_t(j) * stride];
        for (uint32_t j = 0; j < s; ++j) p[uint64_t(j) * stride] = m;
      }
    double a1 = 0.0, a2 = 0.0;
    for_each_config(sp, [&](uint64_t c, const uint32_t*, double w) {
      const double d = f.values[c] - fiber_mean[c];
      a1 += w * std::abs(d);
      a2 += w * d * d;
    });
    out.inf1[k] = a1;
    out.inf2[k] = a2;
  }

  if (sp.all_binary()) {
    std::vector<double> cls(n, 0.0);
    for (size_t k = 0; k < n; ++k) {
      const uint64_t stride = sp.stride(k);
      const double p0 = sp.law(k).prob(0);
      double acc = 0.0;
      for_each_config(sp, [&](uint64_t c, const uint32_t* idx, double w) {
        if (idx[k] != 0) return;
        if (f.values[c] != f.values[c + stride]) acc += w / p0;
      });
      cls[k] = acc;
    }
    out.classical = std::move(cls);

    if (is_boolean(f.values)) {
      // for indicator functions the two influence moments coincide up to
      // the factor 2; a violation here means the enumeration is broken
      for (size_t k = 0; k < n; ++k)
        if (std::abs(out.inf1[k] - 2.0 * out.inf2[k]) > 1e-9)
          throw std::logic_error(
              "influence_profile: boolean moment identity violated");
    }
  }

  double w = 0.0;
  for (size_t k = 0; k < n; ++k) w += out.inf1[k] * out.inf1[k];
  out.w_total = w;
  return out;
}

CompositionReport composition_influence_check(
    const TabulatedFunction& f, const std::function<double(double)>& phi,
    std::optional<double> deriv_bound) {
  validate(f, "composition_influence_check");
  TabulatedFunction g{f.space, std::vector<double>(f.values.size())};
  for (size_t i = 0; i < f.values.size(); ++i) g.values[i] = phi(f.values[i]);

  CompositionReport rep;
  if (deriv_bound) {
    rep.lip = *deriv_bound;
  } else {
    std::set<double> range(f.values.begin(), f.values.end());
    std::vector<double> xs(range.begin(), range.end());
    double lip = 0.0;
    for (size_t i = 1; i < xs.size(); ++i)
      lip = std::max(lip, std::abs(phi(xs[i]) - phi(xs[i - 1])) /
                              (xs[i] - xs[i - 1]));
    rep.lip = lip;
  }

  InfluenceProfile pf = influence_profile(f);
  InfluenceProfile pg = influence_profile(g);
  rep.lhs = pg.inf1;
  rep.rhs.assign(pf.inf1.size(), 0.0);
  rep.holds = true;
  for (size_t k = 0; k < pf.inf1.size(); ++k) {
    rep.rhs[k] = 2.0 * rep.lip * pf.inf1[k];
    if (rep.lhs[k] > rep.rhs[k] + 1e-12) rep.holds = false;
  }
  return rep;
}

}  // namespace nsflow
