#pragma once

#include <cstdint>
#include <vector>

#include "nsflow/space.hpp"

namespace nsflow {

struct VarianceSpectrum {
  std::vector<double> norms_sq;  // indexed by degree 0..n; [0] = (E f)^2
  double total_variance() const {
    double v = 0.0;
    for (size_t d = 1; d < norms_sq.size(); ++d) v += norms_sq[d];
    return v;
  }
};

// Orthogonal components f_I keyed by coordinate bitmask. Each table lives on
// the sub-product space of the coordinates in I (ascending, lowest fastest);
// the I = empty component is `mean`.
struct ChaosDecomposition {
  SpacePtr space;
  double mean = 0.0;
  double var = 0.0;
  std::vector<uint32_t> masks;  // ascending, empty mask excluded
  std::vector<std::vector<double>> tables;
  std::vector<double> mass;  // ||f_I||^2 per kept component

  int find(uint32_t mask) const;  // index in masks or -1
};

// f - E_k[f]
TabulatedFunction delta(const TabulatedFunction& f, size_t k);

// E[f | F_J] as a table on the full space (constant along coords not in J)
TabulatedFunction cond_mean(const TabulatedFunction& f, uint32_t mask_j);

ChaosDecomposition efron_stein(const TabulatedFunction& f,
                               double drop_tol = 1e-14);

// per-degree masses via the orthonormal coefficient transform;
// binary spaces admit n up to 24, general supports are enum_cap-bound
VarianceSpectrum variance_spectrum(const TabulatedFunction& f);
VarianceSpectrum spectrum_of(const ChaosDecomposition& dec);

// independent route: subset variances Var(E[f|F_J]) for every J by repeated
// marginal averaging, then the inverse subset-sum (Moebius) transform
VarianceSpectrum variance_spectrum_mobius(const TabulatedFunction& f);
// the per-mask masses from the same route, index = bitmask
std::vector<double> subset_masses_mobius(const TabulatedFunction& f);

// f_I evaluated on the full space (zero table if the component was dropped)
TabulatedFunction component_on_space(const ChaosDecomposition& dec,
                                     uint32_t mask);

TabulatedFunction project_le_d(const ChaosDecomposition& dec, size_t d);

// T^eta, requires 0 <= eta <= 1
TabulatedFunction apply_noise_operator(const ChaosDecomposition& dec,
                                       double eta);
// same map without the range guard; the eta > 1 path exists for
// hypercontractivity checks that invert T^eta on a degree cutoff
TabulatedFunction apply_noise_scaling(const ChaosDecomposition& dec,
                                      double eta);

// in-place fast subset-sum transform and its inverse over a 2^n array
void subset_zeta(std::vector<double>& a);
void subset_mobius(std::vector<double>& a);

// Row-major s x s matrix H with H[r*s+j] = H_r(atom_j): orthonormal
// functions under the law's weights, H_0 = 1, so rows 1..s-1 span the
// centred subspace of L^2(law).
std::vector<double> onb_matrix(const FiniteLaw& law);

}  // namespace nsflow
