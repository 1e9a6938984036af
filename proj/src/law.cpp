#include "nsflow/law.hpp"

#include <cmath>
#include <cstdio>

#include "nsflow/errors.hpp"

namespace nsflow {

FiniteLaw::FiniteLaw(std::vector<double> atoms, std::vector<double> probs)
    : atoms_(std::move(atoms)), probs_(std::move(probs)) {
  if (atoms_.empty() || atoms_.size() != probs_.size())
    throw DimensionMismatch("law needs equal-length nonempty atom/prob lists");
  double sum = 0.0;
  for (double p : probs_) {
    if (!(p > 0.0)) throw NegativeProb("atom probabilities must be positive");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-12)
    throw NonNormalized("probabilities sum to " + std::to_string(sum));
  for (size_t i = 0; i < atoms_.size(); ++i)
    for (size_t j = i + 1; j < atoms_.size(); ++j)
      if (atoms_[i] == atoms_[j])
        throw DuplicateAtom("repeated atom value " + std::to_string(atoms_[i]));
  for (double& p : probs_) p /= sum;

  for (size_t j = 0; j < atoms_.size(); ++j) mean_ += probs_[j] * atoms_[j];
  for (size_t j = 0; j < atoms_.size(); ++j) {
    const double d = atoms_[j] - mean_;
    var_ += probs_[j] * d * d;
  }

  cum_.resize(atoms_.size());
  long double acc = 0.0L;
  for (size_t j = 0; j < atoms_.size(); ++j) {
    acc += static_cast<long double>(probs_[j]);
    long double t = acc * 0x1.0p64L;
    cum_[j] = t >= 0x1.0p64L ? ~0ull : static_cast<uint64_t>(t);
  }
  cum_.back() = ~0ull;  // the last atom absorbs rounding slack
}

size_t FiniteLaw::sample(RngStream& stream) const {
  const uint64_t u = stream.next_u64();
  size_t j = 0;
  while (u > cum_[j]) ++j;  // support sizes are tiny, linear scan wins
  return j;
}

FiniteLaw make_finite_law(std::vector<double> atoms,
                          std::vector<double> probs) {
  return FiniteLaw(std::move(atoms), std::move(probs));
}

FiniteLaw rademacher_law() { return FiniteLaw({-1.0, 1.0}, {0.5, 0.5}); }

FiniteLaw biased_pm1_law(double p) {
  return FiniteLaw({-1.0, 1.0}, {1.0 - p, p});
}

FiniteLaw bernoulli_law(double p) {
  return FiniteLaw({0.0, 1.0}, {1.0 - p, p});
}

FiniteLaw uniform_law(size_t k) {
  std::vector<double> a(k), p(k, 1.0 / double(k));
  for (size_t j = 0; j < k; ++j) a[j] = double(j);
  return FiniteLaw(std::move(a), std::move(p));
}

}  // namespace nsflow
