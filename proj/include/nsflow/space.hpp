#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "nsflow/law.hpp"

namespace nsflow {

struct Config {
  std::vector<uint32_t> idx;  // atom index per coordinate
};

// Product of finite laws with the canonical dense order: mixed-radix
// lexicographic, coordinate 0 fastest. Every dense table in the library is
// laid out this way. Immutable after construction.
class ProductSpace {
 public:
  explicit ProductSpace(std::vector<FiniteLaw> laws,
                        uint64_t enum_cap = uint64_t(1) << 24);

  size_t n() const { return laws_.size(); }
  const FiniteLaw& law(size_t k) const { return laws_[k]; }
  uint64_t enum_cap() const { return enum_cap_; }
  // saturates at 2^63 on overflow; the cap check screens such spaces out
  uint64_t config_count() const { return count_; }
  uint64_t stride(size_t k) const { return strides_[k]; }
  bool all_binary() const { return all_binary_; }

  // throws CapExceeded naming the op when `needed` configs exceed the cap
  void check_cap(const char* op, uint64_t needed) const;
  void check_cap(const char* op) const { check_cap(op, count_); }

  void decode(uint64_t c, uint32_t* idx) const;
  uint64_t encode(const uint32_t* idx) const;
  double weight(const uint32_t* idx) const;

  Config sample(RngStream& stream) const;

 private:
  std::vector<FiniteLaw> laws_;
  std::vector<uint64_t> strides_;
  uint64_t count_;
  uint64_t enum_cap_;
  bool all_binary_;
};

using SpacePtr = std::shared_ptr<const ProductSpace>;

SpacePtr product_space(std::vector<FiniteLaw> laws,
                       uint64_t enum_cap = uint64_t(1) << 24);
SpacePtr rademacher_space(size_t n, uint64_t enum_cap = uint64_t(1) << 24);

Config sample_config(const ProductSpace& space, RngStream& stream);

struct TabulatedFunction {
  SpacePtr space;
  std::vector<double> values;  // one entry per config, canonical order
};

TabulatedFunction tabulate(const SpacePtr& space,
                           const std::function<double(const Config&)>& fn);

// odometer enumeration; fn(config_index, digits, weight)
void for_each_config(
    const ProductSpace& space,
    const std::function<void(uint64_t, const uint32_t*, double)>& fn);

double expectation(const TabulatedFunction& f);
double variance(const TabulatedFunction& f);
double inner_product(const TabulatedFunction& f, const TabulatedFunction& g);
// E[|f|^q]^{1/q}
double lq_norm(const TabulatedFunction& f, double q);

}  // namespace nsflow
