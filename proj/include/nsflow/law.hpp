#pragma once

#include <cstdint>
#include <vector>

#include "nsflow/rng.hpp"

namespace nsflow {

// Finite-support probability law. Atoms are kept exactly as given (the
// polymer module depends on exact +-1 atoms); probabilities are renormalized
// by their sum, a no-op when the sum is exactly 1.
class FiniteLaw {
 public:
  FiniteLaw(std::vector<double> atoms, std::vector<double> probs);

  size_t size() const { return atoms_.size(); }
  const std::vector<double>& atoms() const { return atoms_; }
  const std::vector<double>& probs() const { return probs_; }
  double atom(size_t j) const { return atoms_[j]; }
  double prob(size_t j) const { return probs_[j]; }
  double mean() const { return mean_; }
  double variance() const { return var_; }
  bool binary() const { return atoms_.size() == 2; }

  // atom index drawn from the law; thresholds quantize probabilities at
  // 2^-64, sampling paths only
  size_t sample(RngStream& stream) const;

 private:
  std::vector<double> atoms_;
  std::vector<double> probs_;
  std::vector<uint64_t> cum_;  // cumulative thresholds on the u64 scale
  double mean_ = 0.0;
  double var_ = 0.0;
};

FiniteLaw make_finite_law(std::vector<double> atoms, std::vector<double> probs);

FiniteLaw rademacher_law();
// {-1,+1} with P(+1) = p
FiniteLaw biased_pm1_law(double p);
// {0,1} with P(1) = p
FiniteLaw bernoulli_law(double p);
// k equiprobable atoms 0..k-1
FiniteLaw uniform_law(size_t k);

}  // namespace nsflow
