#pragma once

#include <array>
#include <cstdint>

namespace nsflow {

// Counter-based RNG (Philox 4x32-10, Salmon et al. SC 2011). Every draw is a
// pure function of (key, 128-bit counter), which is what makes MC runs
// reproducible for any worker count: streams are counters, not state.

constexpr uint32_t kPhiloxW32A = 0x9E3779B9u;
constexpr uint32_t kPhiloxW32B = 0xBB67AE85u;
constexpr uint32_t kPhiloxM4x32A = 0xD2511F53u;
constexpr uint32_t kPhiloxM4x32B = 0xCD9E8D57u;

inline std::array<uint32_t, 4> philox4x32(std::array<uint32_t, 4> ctr,
                                          std::array<uint32_t, 2> key) {
  for (int round = 0; round < 10; ++round) {
    const uint64_t p0 = uint64_t(kPhiloxM4x32A) * ctr[0];
    const uint64_t p1 = uint64_t(kPhiloxM4x32B) * ctr[2];
    ctr = {uint32_t(p1 >> 32) ^ ctr[1] ^ key[0], uint32_t(p1),
           uint32_t(p0 >> 32) ^ ctr[3] ^ key[1], uint32_t(p0)};
    key[0] += kPhiloxW32A;
    key[1] += kPhiloxW32B;
  }
  return ctr;
}

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Domain constants keep independent uses of the same master seed on disjoint
// key spaces (sampling streams, disorder draws, resample decisions, ...).
inline uint64_t derive_key(uint64_t seed, uint64_t domain) {
  return splitmix64(splitmix64(seed) + domain);
}

inline std::array<uint32_t, 4> philox_block(uint64_t key, uint64_t ctr_hi,
                                            uint64_t ctr_lo) {
  return philox4x32(
      {uint32_t(ctr_lo), uint32_t(ctr_lo >> 32), uint32_t(ctr_hi),
       uint32_t(ctr_hi >> 32)},
      {uint32_t(key), uint32_t(key >> 32)});
}

inline uint64_t philox_u64(uint64_t key, uint64_t ctr_hi, uint64_t ctr_lo) {
  const auto b = philox_block(key, ctr_hi, ctr_lo);
  return uint64_t(b[0]) | (uint64_t(b[1]) << 32);
}

// Sequential view over one (key, stream) slice of the counter space.
// ctr_hi = stream id, ctr_lo = block position, so distinct streams never
// overlap and a stream can be re-created from (seed, stream) alone.
class RngStream {
 public:
  RngStream(uint64_t seed, uint64_t stream, uint64_t domain = 0)
      : key_(derive_key(seed, domain)), hi_(stream), lo_(0), pos_(4) {}

  uint32_t next_u32() {
    if (pos_ == 4) {
      buf_ = philox_block(key_, hi_, lo_++);
      pos_ = 0;
    }
    return buf_[pos_++];
  }

  uint64_t next_u64() {
    const uint64_t a = next_u32();
    return a | (uint64_t(next_u32()) << 32);
  }

  // [0,1) with 53 random bits
  double next_unit() { return double(next_u64() >> 11) * 0x1.0p-53; }

  // exact at 2^-64 granularity
  bool next_bernoulli(double p) {
    return static_cast<long double>(next_u64()) <
           static_cast<long double>(p) * 0x1.0p64L;
  }

 private:
  uint64_t key_;
  uint64_t hi_, lo_;
  std::array<uint32_t, 4> buf_{};
  int pos_;
};

}  // namespace nsflow
