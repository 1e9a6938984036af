#include "nsflow/chaos.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "nsflow/errors.hpp"

namespace nsflow {

namespace {

void validate(const TabulatedFunction& f, const char* op) {
  if (!f.space) throw DimensionMismatch(std::string(op) + ": null space");
  if (f.values.size() != f.space->config_count())
    throw DimensionMismatch(std::string(op) + ": table size " +
                            std::to_string(f.values.size()) + " != " +
                            std::to_string(f.space->config_count()));
}

}  // namespace

// Gram-Schmidt on centered-scaled monomials; distinct atoms keep this
// well conditioned for the small supports we enumerate.
std::vector<double> onb_matrix(const FiniteLaw& law) {
  const size_t s = law.size();
  std::vector<double> H(s * s, 0.0);
  for (size_t j = 0; j < s; ++j) H[j] = 1.0;
  if (s == 1) return H;

  double lo = law.atom(0), hi = law.atom(0);
  for (size_t j = 1; j < s; ++j) {
    lo = std::min(lo, law.atom(j));
    hi = std::max(hi, law.atom(j));
  }
  const double mid = 0.5 * (lo + hi), half = 0.5 * (hi - lo);

  std::vector<double> x(s);
  for (size_t j = 0; j < s; ++j) x[j] = (law.atom(j) - mid) / half;

  auto dot = [&](const double* u, const double* v) {
    double acc = 0.0;
    for (size_t j = 0; j < s; ++j) acc += law.prob(j) * u[j] * v[j];
    return acc;
  };

  std::vector<double> v(s);
  for (size_t r = 1; r < s; ++r) {
    for (size_t j = 0; j < s; ++j) v[j] = std::pow(x[j], double(r));
    for (int pass = 0; pass < 2; ++pass)
      for (size_t t = 0; t < r; ++t) {
        const double c = dot(v.data(), &H[t * s]);
        for (size_t j = 0; j < s; ++j) v[j] -= c * H[t * s + j];
      }
    const double nrm2 = dot(v.data(), v.data());
    if (!(nrm2 > 1e-24))
      throw DegenerateLaw("orthonormal basis collapsed, atoms too close");
    const double inv = 1.0 / std::sqrt(nrm2);
    for (size_t j = 0; j < s; ++j) H[r * s + j] = v[j] * inv;
  }
  return H;
}

namespace {

// In-place square transform along one axis: out_r = sum_j M[r*s+j] in_j.
void axis_apply_inplace(std::vector<double>& v, uint64_t stride, uint32_t s,
                        const double* M) {
  if (s == 1) return;
  const uint64_t count = v.size();
  const uint64_t block = stride * s;
  std::vector<double> tmp(s);
  for (uint64_t base = 0; base < count; base += block)
    for (uint64_t t = 0; t < stride; ++t) {
      double* p = v.data() + base + t;
      for (uint32_t j = 0; j < s; ++j) tmp[j] = p[uint64_t(j) * stride];
      for (uint32_t r = 0; r < s; ++r) {
        const double* row = M + size_t(r) * s;
        double acc = 0.0;
        for (uint32_t j = 0; j < s; ++j) acc += row[j] * tmp[j];
        p[uint64_t(r) * stride] = acc;
      }
    }
}

// Rectangular transform along `axis` of a dense tensor with dims `dims`
// (axis 0 fastest). T is s_out x s_in row-major. Updates dims.
std::vector<double> axis_apply_rect(const std::vector<double>& in,
                                    std::vector<uint32_t>& dims, size_t axis,
                                    const double* T, uint32_t s_out) {
  uint64_t stride = 1;
  for (size_t i = 0; i < axis; ++i) stride *= dims[i];
  const uint32_t s_in = dims[axis];
  const uint64_t outer = in.size() / (stride * s_in);
  std::vector<double> out((in.size() / s_in) * s_out);
  for (uint64_t o = 0; o < outer; ++o)
    for (uint64_t t = 0; t < stride; ++t) {
      const double* pin = in.data() + o * s_in * stride + t;
      double* pout = out.data() + o * s_out * stride + t;
      for (uint32_t r = 0; r < s_out; ++r) {
        const double* row = T + size_t(r) * s_in;
        double acc = 0.0;
        for (uint32_t j = 0; j < s_in; ++j) acc += row[j] * pin[uint64_t(j) * stride];
        pout[uint64_t(r) * stride] = acc;
      }
    }
  dims[axis] = s_out;
  return out;
}

// Broadcast fiber means in place along one axis.
void axis_mean_inplace(std::vector<double>& v, uint64_t stride, uint32_t s,
                       const std::vector<double>& probs) {
  const uint64_t count = v.size();
  const uint64_t block = stride * s;
  for (uint64_t base = 0; base < count; base += block)
    for (uint64_t t = 0; t < stride; ++t) {
      double* p = v.data() + base + t;
      double m = 0.0;
      for (uint32_t j = 0; j < s; ++j) m += probs[j] * p[uint64_t(j) * stride];
      for (uint32_t j = 0; j < s; ++j) p[uint64_t(j) * stride] = m;
    }
}

// Full analysis transform: per-coordinate A with A[r][j] = p_j H_r(atom_j).
// Cell c then holds the coefficient of the product basis function indexed by
// the digits of c; digit 0 is the constant direction of that coordinate.
std::vector<double> analysis(const TabulatedFunction& f) {
  const ProductSpace& sp = *f.space;
  std::vector<double> coef = f.values;
  for (size_t k = 0; k < sp.n(); ++k) {
    const FiniteLaw& law = sp.law(k);
    const size_t s = law.size();
    std::vector<double> H = onb_matrix(law);
    std::vector<double> A(s * s);
    for (size_t r = 0; r < s; ++r)
      for (size_t j = 0; j < s; ++j) A[r * s + j] = law.prob(j) * H[r * s + j];
    axis_apply_inplace(coef, sp.stride(k), uint32_t(s), A.data());
  }
  return coef;
}

// Odometer over coefficient cells tracking the support mask incrementally.
// fn(cell_index, digits, mask)
void for_each_cell(const ProductSpace& sp,
                   const std::function<void(uint64_t, const uint32_t*,
                                            uint32_t)>& fn) {
  const size_t n = sp.n();
  std::vector<uint32_t> digits(n, 0);
  uint32_t mask = 0;
  const uint64_t count = sp.config_count();
  for (uint64_t c = 0;; ++c) {
    fn(c, digits.data(), mask);
    if (c + 1 == count) break;
    size_t k = 0;
    while (true) {
      const uint32_t sk = uint32_t(sp.law(k).size());
      if (digits[k] + 1 < sk) {
        if (digits[k] == 0) mask |= (1u << k);
        ++digits[k];
        break;
      }
      digits[k] = 0;
      mask &= ~(1u << k);
      ++k;
    }
  }
}

constexpr size_t kMaskCoordLimit = 24;
constexpr uint64_t kComponentCellCap = uint64_t(1) << 26;

void check_mask_limit(const ProductSpace& sp, const char* op) {
  if (sp.n() > kMaskCoordLimit)
    throw CapExceeded(std::string(op) + ": " + std::to_string(sp.n()) +
                      " coordinates exceed the " +
                      std::to_string(kMaskCoordLimit) + "-coordinate mask limit");
}

uint32_t full_mask(size_t n) {
  return n >= 32 ? ~0u : ((1u << n) - 1u);
}

void check_mask_valid(const ProductSpace& sp, uint32_t mask, const char* op) {
  if (mask & ~full_mask(sp.n()))
    throw CoordinateOutOfRange(std::string(op) + ": mask " +
                               std::to_string(mask) + " names coordinates >= " +
                               std::to_string(sp.n()));
}

}  // namespace

int ChaosDecomposition::find(uint32_t mask) const {
  auto it = std::lower_bound(masks.begin(), masks.end(), mask);
  if (it == masks.end() || *it != mask) return -1;
  return int(it - masks.begin());
}

TabulatedFunction delta(const TabulatedFunction& f, size_t k) {
  validate(f, "delta");
  const ProductSpace& sp = *f.space;
  if (k >= sp.n())
    throw CoordinateOutOfRange("delta: coordinate " + std::to_string(k) +
                               " out of range for n=" + std::to_string(sp.n()));
  sp.check_cap("delta");
  TabulatedFunction out{f.space, f.values};
  std::vector<double> mean_part = f.values;
  axis_mean_inplace(mean_part, sp.stride(k), uint32_t(sp.law(k).size()),
                    sp.law(k).probs());
  for (size_t i = 0; i < out.values.size(); ++i) out.values[i] -= mean_part[i];
  return out;
}

TabulatedFunction cond_mean(const TabulatedFunction& f, uint32_t mask_j) {
  validate(f, "cond_mean");
  const ProductSpace& sp = *f.space;
  check_mask_limit(sp, "cond_mean");
  check_mask_valid(sp, mask_j, "cond_mean");
  sp.check_cap("cond_mean");
  TabulatedFunction out{f.space, f.values};
  for (size_t k = 0; k < sp.n(); ++k)
    if (!(mask_j & (1u << k)))
      axis_mean_inplace(out.values, sp.stride(k), uint32_t(sp.law(k).size()),
                        sp.law(k).probs());
  return out;
}

ChaosDecomposition efron_stein(const TabulatedFunction& f, double drop_tol) {
  validate(f, "efron_stein");
  const ProductSpace& sp = *f.space;
  check_mask_limit(sp, "efron_stein");
  sp.check_cap("efron_stein");
  // the component tables jointly hold prod_i (1 + s_i) cells
  uint64_t total_cells = 1;
  for (size_t k = 0; k < sp.n(); ++k) {
    total_cells *= (1 + sp.law(k).size());
    if (total_cells > kComponentCellCap)
      throw CapExceeded("efron_stein: component tables exceed the cell cap");
  }

  std::vector<double> coef = analysis(f);

  ChaosDecomposition dec;
  dec.space = f.space;
  dec.mean = coef[0];

  const size_t n = sp.n();
  std::vector<double> mass_by_mask(size_t(1) << n, 0.0);
  for_each_cell(sp, [&](uint64_t c, const uint32_t*, uint32_t mask) {
    mass_by_mask[mask] += coef[c] * coef[c];
  });
  double var = 0.0;
  for (size_t m = 1; m < mass_by_mask.size(); ++m) var += mass_by_mask[m];
  dec.var = var;

  std::vector<int> comp_of_mask(size_t(1) << n, -1);
  for (size_t m = 1; m < mass_by_mask.size(); ++m) {
    const double mass = mass_by_mask[m];
    const bool keep =
        drop_tol == 0.0 ? true : (mass > drop_tol * var && mass > 0.0);
    if (!keep) continue;
    comp_of_mask[m] = int(dec.masks.size());
    dec.masks.push_back(uint32_t(m));
    dec.mass.push_back(mass);
  }

  // gather nonzero-direction coefficients per kept mask, then synthesize
  // each component on its sub-space axis by axis
  std::vector<std::vector<double>> comp_coef(dec.masks.size());
  std::vector<std::vector<uint64_t>> comp_stride(dec.masks.size());
  for (size_t ci = 0; ci < dec.masks.size(); ++ci) {
    const uint32_t m = dec.masks[ci];
    uint64_t sz = 1;
    comp_stride[ci].assign(n, 0);
    for (size_t k = 0; k < n; ++k)
      if (m & (1u << k)) {
        comp_stride[ci][k] = sz;
        sz *= sp.law(k).size() - 1;
      }
    comp_coef[ci].assign(sz, 0.0);
  }
  for_each_cell(sp, [&](uint64_t c, const uint32_t* digits, uint32_t mask) {
    const int ci = mask ? comp_of_mask[mask] : -1;
    if (ci < 0) return;
    uint64_t idx = 0;
    uint32_t rest = mask;
    while (rest) {
      const unsigned k = unsigned(__builtin_ctz(rest));
      rest &= rest - 1;
      idx += uint64_t(digits[k] - 1) * comp_stride[ci][k];
    }
    comp_coef[ci][idx] += coef[c];
  });

  dec.tables.resize(dec.masks.size());
  for (size_t ci = 0; ci < dec.masks.size(); ++ci) {
    const uint32_t m = dec.masks[ci];
    std::vector<uint32_t> dims;
    std::vector<size_t> coords;
    for (size_t k = 0; k < n; ++k)
      if (m & (1u << k)) {
        dims.push_back(uint32_t(sp.law(k).size() - 1));
        coords.push_back(k);
      }
    std::vector<double> cur = std::move(comp_coef[ci]);
    for (size_t a = 0; a < coords.size(); ++a) {
      const FiniteLaw& law = sp.law(coords[a]);
      const size_t s = law.size();
      std::vector<double> H = onb_matrix(law);
      // rows r = 1..s-1 transposed: T[x][r-1] = H_r(atom_x)
      std::vector<double> T(s * (s - 1));
      for (size_t x = 0; x < s; ++x)
        for (size_t r = 1; r < s; ++r) T[x * (s - 1) + (r - 1)] = H[r * s + x];
      cur = axis_apply_rect(cur, dims, a, T.data(), uint32_t(s));
    }
    dec.tables[ci] = std::move(cur);
  }
  return dec;
}

VarianceSpectrum variance_spectrum(const TabulatedFunction& f) {
  validate(f, "variance_spectrum");
  const ProductSpace& sp = *f.space;
  check_mask_limit(sp, "variance_spectrum");
  sp.check_cap("variance_spectrum");
  std::vector<double> coef = analysis(f);
  VarianceSpectrum out;
  out.norms_sq.assign(sp.n() + 1, 0.0);
  for_each_cell(sp, [&](uint64_t c, const uint32_t*, uint32_t mask) {
    out.norms_sq[size_t(__builtin_popcount(mask))] += coef[c] * coef[c];
  });
  return out;
}

VarianceSpectrum spectrum_of(const ChaosDecomposition& dec) {
  VarianceSpectrum out;
  out.norms_sq.assign(dec.space->n() + 1, 0.0);
  out.norms_sq[0] = dec.mean * dec.mean;
  for (size_t ci = 0; ci < dec.masks.size(); ++ci)
    out.norms_sq[size_t(__builtin_popcount(dec.masks[ci]))] += dec.mass[ci];
  return out;
}

namespace {

// DFS over coordinate-removal subsets. Each node averages one more
// coordinate out of the parent tensor, so every subset J is visited once
// with the projected table of E[f | F_J] on the sub-space of J.
struct SubsetVarScan {
  const ProductSpace* sp;
  std::vector<double> out_var;   // by mask
  double mean0 = 0.0;

  void run(const TabulatedFunction& f) {
    const size_t n = sp->n();
    out_var.assign(size_t(1) << n, 0.0);
    std::vector<size_t> coords(n);
    for (size_t k = 0; k < n; ++k) coords[k] = k;
    std::vector<uint32_t> dims(n);
    for (size_t k = 0; k < n; ++k) dims[k] = uint32_t(sp->law(k).size());
    visit(f.values, dims, coords, full_mask(n), n);
  }

  void visit(const std::vector<double>& cur, const std::vector<uint32_t>& dims,
             const std::vector<size_t>& coords, uint32_t mask,
             size_t removable_below) {
    out_var[mask] = weighted_var(cur, coords);
    if (mask == 0) mean0 = cur[0];
    for (size_t a = 0; a < coords.size(); ++a) {
      const size_t k = coords[a];
      if (k >= removable_below) continue;
      std::vector<uint32_t> d2 = dims;
      std::vector<double> next = axis_apply_rect(
          cur, d2, a, sp->law(k).probs().data(), 1);
      // squeeze the averaged axis out
      d2.erase(d2.begin() + long(a));
      std::vector<size_t> c2 = coords;
      c2.erase(c2.begin() + long(a));
      visit(next, d2, c2, mask & ~(1u << k), k);
    }
  }

  double weighted_var(const std::vector<double>& t,
                      const std::vector<size_t>& coords) const {
    // odometer over the sub-space of `coords`
    std::vector<uint32_t> digits(coords.size(), 0);
    double w = 1.0;
    for (size_t a = 0; a < coords.size(); ++a) w *= sp->law(coords[a]).prob(0);
    double s1 = 0.0, s2 = 0.0;
    for (uint64_t c = 0;; ++c) {
      s1 += w * t[c];
      s2 += w * t[c] * t[c];
      if (c + 1 == t.size()) break;
      size_t a = 0;
      while (true) {
        const FiniteLaw& law = sp->law(coords[a]);
        w /= law.prob(digits[a]);
        if (digits[a] + 1 < law.size()) {
          ++digits[a];
          w *= law.prob(digits[a]);
          break;
        }
        digits[a] = 0;
        w *= law.prob(0);
        ++a;
      }
    }
    return s2 - s1 * s1;
  }
};

SubsetVarScan scan_subset_variances(const TabulatedFunction& f) {
  validate(f, "subset_variances");
  const ProductSpace& sp = *f.space;
  if (sp.n() > 20)
    throw CapExceeded("subset_variances: > 20 coordinates");
  sp.check_cap("subset_variances");
  const uint64_t work = sp.config_count() << sp.n();
  if (work > (uint64_t(1) << 34))
    throw CapExceeded("subset_variances: 2^n * configs exceeds the work cap");
  SubsetVarScan scan;
  scan.sp = &sp;
  scan.run(f);
  return scan;
}

}  // namespace

std::vector<double> subset_masses_mobius(const TabulatedFunction& f) {
  SubsetVarScan scan = scan_subset_variances(f);
  std::vector<double> m = std::move(scan.out_var);
  subset_mobius(m);
  return m;
}

VarianceSpectrum variance_spectrum_mobius(const TabulatedFunction& f) {
  SubsetVarScan scan = scan_subset_variances(f);
  std::vector<double> m = std::move(scan.out_var);
  subset_mobius(m);
  VarianceSpectrum out;
  out.norms_sq.assign(f.space->n() + 1, 0.0);
  out.norms_sq[0] = scan.mean0 * scan.mean0;
  for (size_t mask = 1; mask < m.size(); ++mask)
    out.norms_sq[size_t(__builtin_popcount(uint32_t(mask)))] += m[mask];
  return out;
}

TabulatedFunction component_on_space(const ChaosDecomposition& dec,
                                     uint32_t mask) {
  const ProductSpace& sp = *dec.space;
  check_mask_valid(sp, mask, "component_on_space");
  sp.check_cap("component_on_space");
  TabulatedFunction out{dec.space,
                        std::vector<double>(sp.config_count(), 0.0)};
  if (mask == 0) {
    std::fill(out.values.begin(), out.values.end(), dec.mean);
    return out;
  }
  const int ci = dec.find(mask);
  if (ci < 0) return out;  // dropped or identically zero component

  const size_t n = sp.n();
  std::vector<uint64_t> sub_stride(n, 0);
  uint64_t sz = 1;
  for (size_t k = 0; k < n; ++k)
    if (mask & (1u << k)) {
      sub_stride[k] = sz;
      sz *= sp.law(k).size();
    }
  const std::vector<double>& table = dec.tables[size_t(ci)];

  std::vector<uint32_t> digits(n, 0);
  uint64_t sub = 0;
  const uint64_t count = sp.config_count();
  for (uint64_t c = 0;; ++c) {
    out.values[c] = table[sub];
    if (c + 1 == count) break;
    size_t k = 0;
    while (true) {
      const uint32_t sk = uint32_t(sp.law(k).size());
      if (digits[k] + 1 < sk) {
        ++digits[k];
        sub += sub_stride[k];
        break;
      }
      sub -= uint64_t(digits[k]) * sub_stride[k];
      digits[k] = 0;
      ++k;
    }
  }
  return out;
}

namespace {

TabulatedFunction weighted_component_sum(const ChaosDecomposition& dec,
                                         const std::vector<double>& scale) {
  const ProductSpace& sp = *dec.space;
  sp.check_cap("component_sum");
  TabulatedFunction out{dec.space,
                        std::vector<double>(sp.config_count(), dec.mean)};
  for (size_t ci = 0; ci < dec.masks.size(); ++ci) {
    const double sc = scale[ci];
    if (sc == 0.0) continue;
    TabulatedFunction comp = component_on_space(dec, dec.masks[ci]);
    for (size_t i = 0; i < out.values.size(); ++i)
      out.values[i] += sc * comp.values[i];
  }
  return out;
}

}  // namespace

TabulatedFunction project_le_d(const ChaosDecomposition& dec, size_t d) {
  std::vector<double> scale(dec.masks.size(), 0.0);
  for (size_t ci = 0; ci < dec.masks.size(); ++ci)
    if (size_t(__builtin_popcount(dec.masks[ci])) <= d) scale[ci] = 1.0;
  return weighted_component_sum(dec, scale);
}

TabulatedFunction apply_noise_operator(const ChaosDecomposition& dec,
                                       double eta) {
  if (!(eta >= 0.0 && eta <= 1.0))
    throw OutOfRange("noise operator needs 0 <= eta <= 1, got " +
                     std::to_string(eta));
  return apply_noise_scaling(dec, eta);
}

TabulatedFunction apply_noise_scaling(const ChaosDecomposition& dec,
                                      double eta) {
  if (!std::isfinite(eta))
    throw OutOfRange("noise scaling needs finite eta");
  std::vector<double> scale(dec.masks.size(), 0.0);
  for (size_t ci = 0; ci < dec.masks.size(); ++ci)
    scale[ci] =
        std::pow(eta, double(__builtin_popcount(dec.masks[ci])));
  return weighted_component_sum(dec, scale);
}

void subset_zeta(std::vector<double>& a) {
  const size_t n2 = a.size();
  for (size_t bit = 1; bit < n2; bit <<= 1)
    for (size_t s = 0; s < n2; ++s)
      if (s & bit) a[s] += a[s ^ bit];
}

void subset_mobius(std::vector<double>& a) {
  const size_t n2 = a.size();
  for (size_t bit = 1; bit < n2; bit <<= 1)
    for (size_t s = 0; s < n2; ++s)
      if (s & bit) a[s] -= a[s ^ bit];
}

}  // namespace nsflow
