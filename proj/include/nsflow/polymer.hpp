#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "nsflow/law.hpp"

namespace nsflow {

// Profile on the diffusive scale: evaluated at (x/sqrt(N), y/sqrt(N)).
// Must vanish outside the L-inf ball of support_radius in scaled units.
struct TestFunction2D {
  std::function<double(double, double)> eval;
  double support_radius = 1.0;
};

// Space-time profile rho(t, x, y) with t in [0,1] and (x,y) scaled as above.
struct SpaceTimeFunction {
  std::function<double(double, double, double)> eval;
  double support_radius = 1.0;
};

struct PolymerParams {
  uint64_t length = 0;       // number of disordered layers N
  double theta = 0.0;        // sigma_N^2 = (1 + theta/ln N) / R_N
  FiniteLaw disorder = rademacher_law();  // centred, unit variance
  double trunc_tol = 1e-10;  // mass of the walk allowed outside the box
  double support_radius = 1.0;  // max scaled radius of profiles used later

  // derived at construction
  double overlap = 0.0;      // R_N
  double sigma = 0.0;        // sqrt(sigma_N^2)
  double beta = 0.0;         // inverse temperature with s(beta) = sigma^2
  double lambda_beta = 0.0;  // log mgf at beta
  double mean_abs_zeta = 0.0;  // E|exp(beta*omega - lambda) - 1|
  int64_t box_radius = 0;    // L-inf lattice cutoff for all evaluations
};

PolymerParams make_polymer_params(uint64_t length, double theta,
                                  const FiniteLaw& disorder,
                                  double trunc_tol = 1e-10,
                                  double support_radius = 1.0);

// log E exp(beta * omega) for the given law
double log_mgf(const FiniteLaw& law, double beta);

// smallest beta >= 0 with exp(lambda(2b) - 2 lambda(b)) - 1 = target,
// bisected to 1e-12; throws NoRoot when the law cannot reach the target
double solve_beta(const FiniteLaw& law, double target);

// R_N = sum_{n=1..N} P(S_n = S'_n) for two independent simple walks from 0
double overlap_R(uint64_t length);

// n-step simple random walk kernel on the L-inf box of the given radius;
// probability mass escaping the box is dropped
struct HeatKernelTable {
  uint64_t steps = 0;
  int64_t radius = 0;
  std::vector<double> values;  // (2r+1)^2, row-major in y then x
  double mass = 0.0;           // total retained probability

  double q(int64_t x, int64_t y) const;
};

HeatKernelTable srw_kernel(uint64_t steps, int64_t radius);

// i.i.d. disorder indexed by (layer n in [1,N], site (x,y) in the box),
// realised lazily from counter-mode draws so fields need no storage
struct DisorderField {
  uint64_t length = 0;
  int64_t radius = 0;
  FiniteLaw law = rademacher_law();
  uint64_t seed = 0;
  uint64_t replicate = 0;

  bool two_atom = false;  // bit-plane fast path
  uint64_t key_bits = 0;
  uint64_t key_wide = 0;
  std::vector<long double> cdf;  // inverse-cdf thresholds, scaled by 2^-64

  // atom index at one site
  uint32_t atom(uint64_t n, int64_t x, int64_t y) const;
  // atom indices for x in [x_lo, x_hi] at fixed (n, y)
  void fill_atoms(uint64_t n, int64_t y, int64_t x_lo, int64_t x_hi,
                  uint8_t* out) const;
};

DisorderField make_disorder_field(const PolymerParams& params, uint64_t seed,
                                  uint64_t replicate);

// epsilon-resampled copy: each site independently keeps the base atom with
// probability 1-epsilon, else redraws it fresh; decisions and fresh draws
// use counter streams disjoint from the base field's
struct ResampledField {
  const DisorderField* base = nullptr;
  double epsilon = 0.0;

  uint64_t key_screen = 0;  // keep-decision bit stream, per 128-site block
  uint64_t key_fresh_bits = 0;
  uint64_t key_fresh_wide = 0;
  uint64_t thresh = 0;    // floor((1-eps) * 2^64); keep iff stream word < it
  bool keep_all = false;  // epsilon == 0

  uint32_t atom(uint64_t n, int64_t x, int64_t y) const;
  void fill_atoms(uint64_t n, int64_t y, int64_t x_lo, int64_t x_hi,
                  uint8_t* out) const;
};

ResampledField make_resampled(const DisorderField& base, double epsilon);

struct PartitionResult {
  double value = 0.0;
  uint64_t seed = 0;
  uint64_t replicate = 0;
};

// Z = (1/N) sum_{x0,y0} g(x0/sqrt N) E[exp(sum beta w - lambda); S_{Nt}=y0
// | S_{Ns}=x0] h(y0/sqrt N), evaluated by a layer-by-layer transfer sweep
// over the box; layers outside (Ns, Nt] carry no disorder weight
PartitionResult partition_function(const DisorderField& field,
                                   const PolymerParams& params,
                                   const TestFunction2D& g,
                                   const TestFunction2D& h, double s = 0.0,
                                   double t = 1.0);
PartitionResult partition_function(const ResampledField& field,
                                   const PolymerParams& params,
                                   const TestFunction2D& g,
                                   const TestFunction2D& h, double s = 0.0,
                                   double t = 1.0);

// annealed value: the same contraction with all weights equal to one
double partition_mean(const PolymerParams& params, const TestFunction2D& g,
                      const TestFunction2D& h, double s = 0.0, double t = 1.0);

struct PolymerInfluence {
  double exact = 0.0;  // E|delta_{(n,z)} Z|, valid for nonnegative g, h
  double bound = 0.0;  // (sigma/N) * (g * q_n)(z) * (q_{N-n} * h)(z)
};

// influence of the disorder site (n, (zx, zy)) on Z with s=0, t=1;
// throws SignedTestFunction when g or h is negative somewhere on the box
PolymerInfluence polymer_influence(const PolymerParams& params,
                                   const TestFunction2D& g,
                                   const TestFunction2D& h, uint64_t n,
                                   int64_t zx, int64_t zy);

// the kernel bound alone, using |g| and |h|; defined for signed profiles
double polymer_influence_bound(const PolymerParams& params,
                               const TestFunction2D& g,
                               const TestFunction2D& h, uint64_t n, int64_t zx,
                               int64_t zy);

// sum over all sites of the squared exact influence
double polymer_W(const PolymerParams& params, const TestFunction2D& g,
                 const TestFunction2D& h);

// xi_N(rho) = (1/N) sum_{n,z} rho(n/N, z/sqrt N) omega(n, z)
double white_noise_functional(const DisorderField& field,
                              const PolymerParams& params,
                              const SpaceTimeFunction& rho);

// exact Var[xi_N(rho)] = (1/N^2) sum rho^2
double xi_variance(const PolymerParams& params, const SpaceTimeFunction& rho);

struct ZSpec {
  TestFunction2D g;
  TestFunction2D h;
  double s = 0.0;
  double t = 1.0;
};

struct McCovResult {
  double value = 0.0;
  double std_error = 0.0;
  uint64_t samples = 0;
};

// Monte Carlo Cov[phi(Z(resampled)), psi(Z(base))] over replicate pairs;
// phi/psi take the vector of partition values for the given specs and
// default to the first coordinate when empty
McCovResult mc_polymer_noise_cov(
    const PolymerParams& params, const std::vector<ZSpec>& specs,
    double epsilon, uint64_t samples, uint64_t seed, unsigned workers = 1,
    const std::function<double(const std::vector<double>&)>& phi = {},
    const std::function<double(const std::vector<double>&)>& psi = {});

struct IndependenceRow {
  uint64_t length = 0;
  std::vector<uint64_t> exponents;  // monomial in the xi coordinates
  double cov = 0.0;
  double std_error = 0.0;
};

struct IndependenceReport {
  std::vector<IndependenceRow> rows;
  bool decoupled = true;  // every monomial passes the trend test
};

// joint decorrelation diagnostic: for each N in the grid estimates
// Cov[phi(Z - EZ), prod_i xi(rho_i)^{a_i}] over all monomials of total
// degree 1..max_degree; a monomial passes when the largest-N covariance
// is within 3 SE of zero or the |cov| sequence ends below its start
IndependenceReport independence_diagnostic(
    const std::vector<uint64_t>& lengths, double theta,
    const FiniteLaw& disorder, const TestFunction2D& g,
    const TestFunction2D& h, const std::vector<SpaceTimeFunction>& rhos,
    uint64_t max_degree, const std::function<double(double)>& phi,
    uint64_t samples, uint64_t seed, unsigned workers = 1);

// writes the realised field as "NSPF", version, N, box radius, then one
// atom index byte per site in layer-major, row-major order (atomic replace)
void dump_disorder_field(const DisorderField& field, const std::string& path);

}  // namespace nsflow
