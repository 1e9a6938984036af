#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "nsflow/space.hpp"

namespace nsflow {

struct InfluenceProfile {
  std::vector<double> inf1;  // E|f - E_k f|
  std::vector<double> inf2;  // E[(f - E_k f)^2]
  // flip probability P(f(w with k high) != f(w with k low));
  // present only when every coordinate is binary
  std::optional<std::vector<double>> classical;
  double w_total = 0.0;  // sum of inf1[k]^2
};

InfluenceProfile influence_profile(const TabulatedFunction& f);

struct CompositionReport {
  std::vector<double> lhs;  // inf1 of phi(f)
  std::vector<double> rhs;  // 2 * lip * inf1 of f
  double lip = 0.0;
  bool holds = false;
};

// Checks inf1_k[phi(f)] <= 2 * lip * inf1_k[f] per coordinate. When no
// derivative bound is supplied, lip is the largest slope of phi between
// adjacent values in the exact (finite) range of f, which bounds the
// divided difference across any two range points.
CompositionReport composition_influence_check(
    const TabulatedFunction& f, const std::function<double(double)>& phi,
    std::optional<double> deriv_bound = std::nullopt);

}  // namespace nsflow
