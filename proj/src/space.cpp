#include "nsflow/space.hpp"

#include <cmath>

#include "nsflow/errors.hpp"

namespace nsflow {

ProductSpace::ProductSpace(std::vector<FiniteLaw> laws, uint64_t enum_cap)
    : laws_(std::move(laws)), enum_cap_(enum_cap) {
  if (laws_.empty()) throw DimensionMismatch("product space needs n >= 1");
  strides_.resize(laws_.size());
  unsigned __int128 count = 1;
  all_binary_ = true;
  for (size_t k = 0; k < laws_.size(); ++k) {
    strides_[k] = count > (uint64_t(1) << 62) ? 0 : uint64_t(count);
    count *= laws_[k].size();
    all_binary_ = all_binary_ && laws_[k].binary();
  }
  count_ = count > (uint64_t(1) << 63) ? (uint64_t(1) << 63) : uint64_t(count);
}

void ProductSpace::check_cap(const char* op, uint64_t needed) const {
  if (needed > enum_cap_)
    throw CapExceeded(std::string(op) + ": " + std::to_string(needed) +
                      " configs exceed enum_cap " + std::to_string(enum_cap_));
}

void ProductSpace::decode(uint64_t c, uint32_t* idx) const {
  for (size_t k = 0; k < laws_.size(); ++k) {
    const uint64_t s = laws_[k].size();
    idx[k] = uint32_t(c % s);
    c /= s;
  }
}

uint64_t ProductSpace::encode(const uint32_t* idx) const {
  uint64_t c = 0;
  for (size_t k = 0; k < laws_.size(); ++k) c += strides_[k] * idx[k];
  return c;
}

double ProductSpace::weight(const uint32_t* idx) const {
  double w = 1.0;
  for (size_t k = 0; k < laws_.size(); ++k) w *= laws_[k].prob(idx[k]);
  return w;
}

Config ProductSpace::sample(RngStream& stream) const {
  Config c;
  c.idx.resize(laws_.size());
  for (size_t k = 0; k < laws_.size(); ++k)
    c.idx[k] = uint32_t(laws_[k].sample(stream));
  return c;
}

SpacePtr product_space(std::vector<FiniteLaw> laws, uint64_t enum_cap) {
  return std::make_shared<const ProductSpace>(std::move(laws), enum_cap);
}

SpacePtr rademacher_space(size_t n, uint64_t enum_cap) {
  std::vector<FiniteLaw> laws(n, rademacher_law());
  return product_space(std::move(laws), enum_cap);
}

Config sample_config(const ProductSpace& space, RngStream& stream) {
  return space.sample(stream);
}

void for_each_config(
    const ProductSpace& space,
    const std::function<void(uint64_t, const uint32_t*, double)>& fn) {
  space.check_cap("for_each_config");
  const size_t n = space.n();
  std::vector<uint32_t> idx(n, 0);
  const uint64_t count = space.config_count();
  for (uint64_t c = 0; c < count; ++c) {
    fn(c, idx.data(), space.weight(idx.data()));
    for (size_t k = 0; k < n; ++k) {
      if (++idx[k] < space.law(k).size()) break;
      idx[k] = 0;
    }
  }
}

TabulatedFunction tabulate(const SpacePtr& space,
                           const std::function<double(const Config&)>& fn) {
  space->check_cap("tabulate");
  TabulatedFunction f;
  f.space = space;
  f.values.resize(space->config_count());
  Config c;
  c.idx.assign(space->n(), 0);
  for (uint64_t i = 0; i < f.values.size(); ++i) {
    f.values[i] = fn(c);
    for (size_t k = 0; k < space->n(); ++k) {
      if (++c.idx[k] < space->law(k).size()) break;
      c.idx[k] = 0;
    }
  }
  return f;
}

double expectation(const TabulatedFunction& f) {
  double acc = 0.0;
  for_each_config(*f.space, [&](uint64_t c, const uint32_t*, double w) {
    acc += w * f.values[c];
  });
  return acc;
}

double variance(const TabulatedFunction& f) {
  const double m = expectation(f);
  double acc = 0.0;
  for_each_config(*f.space, [&](uint64_t c, const uint32_t*, double w) {
    const double d = f.values[c] - m;
    acc += w * d * d;
  });
  return acc;
}

double inner_product(const TabulatedFunction& f, const TabulatedFunction& g) {
  if (f.space.get() != g.space.get() && f.values.size() != g.values.size())
    throw DimensionMismatch("inner_product over mismatched spaces");
  double acc = 0.0;
  for_each_config(*f.space, [&](uint64_t c, const uint32_t*, double w) {
    acc += w * f.values[c] * g.values[c];
  });
  return acc;
}

double lq_norm(const TabulatedFunction& f, double q) {
  double acc = 0.0;
  for_each_config(*f.space, [&](uint64_t c, const uint32_t*, double w) {
    acc += w * std::pow(std::abs(f.values[c]), q);
  });
  return std::pow(acc, 1.0 / q);
}

}  // namespace nsflow
