#pragma once

#include <cstdint>
#include <span>

namespace pinnlab {

/// Counter-based pseudo-random generator (Philox 4x32-10).
///
/// A generator is identified by (seed, stream). Distinct streams walk
/// disjoint counter blocks, so per-(trial, element) sub-streams never
/// overlap regardless of how many values each one draws.
class Rng {
 public:
  Rng() : Rng(0, 0) {}
  Rng(uint64_t seed, uint64_t stream = 0)
      : key0_(static_cast<uint32_t>(seed)),
        key1_(static_cast<uint32_t>(seed >> 32)),
        ctr2_(static_cast<uint32_t>(stream)),
        ctr3_(static_cast<uint32_t>(stream >> 32)) {}

  /// Derive an independent generator for a sub-task. Each (seed, stream)
  /// pair owns a 2^64 counter range, keyed off this generator's seed.
  Rng stream(uint64_t sub) const {
    Rng r;
    r.key0_ = key0_;
    r.key1_ = key1_;
    uint64_t base = ((static_cast<uint64_t>(ctr3_) << 32) | ctr2_);
    uint64_t mixed = mix64(base ^ (sub * 0x9e3779b97f4a7c15ull));
    r.ctr2_ = static_cast<uint32_t>(mixed);
    r.ctr3_ = static_cast<uint32_t>(mixed >> 32);
    return r;
  }

  uint32_t next_u32() {
    if (have_ == 0) refill();
    return out_[--have_];
  }

  uint64_t next_u64() {
    uint64_t hi = next_u32();
    return (hi << 32) | next_u32();
  }

  /// Uniform double in [0, 1), 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  uint64_t below(uint64_t n) {
    // Lemire-style rejection-free enough for test workloads: use 64-bit
    // multiply-shift with rejection on the biased band.
    while (true) {
      uint64_t x = next_u64();
      __uint128_t m = static_cast<__uint128_t>(x) * n;
      uint64_t lo = static_cast<uint64_t>(m);
      if (lo >= n) return static_cast<uint64_t>(m >> 64);
      uint64_t thresh = (0 - n) % n;
      if (lo >= thresh) return static_cast<uint64_t>(m >> 64);
    }
  }

  /// Fisher-Yates shuffle of an index span.
  template <typename T>
  void shuffle(std::span<T> v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  static uint64_t mix64(uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  static void philox_round(uint32_t& c0, uint32_t& c1, uint32_t& c2,
                           uint32_t& c3, uint32_t k0, uint32_t k1) {
    constexpr uint64_t kMul0 = 0xD2511F53ull;
    constexpr uint64_t kMul1 = 0xCD9E8D57ull;
    uint64_t p0 = kMul0 * c0;
    uint64_t p1 = kMul1 * c2;
    uint32_t h0 = static_cast<uint32_t>(p0 >> 32), l0 = static_cast<uint32_t>(p0);
    uint32_t h1 = static_cast<uint32_t>(p1 >> 32), l1 = static_cast<uint32_t>(p1);
    uint32_t n0 = h1 ^ c1 ^ k0;
    uint32_t n1 = l1;
    uint32_t n2 = h0 ^ c3 ^ k1;
    uint32_t n3 = l0;
    c0 = n0; c1 = n1; c2 = n2; c3 = n3;
  }

  void refill() {
    uint32_t c0 = ctr0_, c1 = ctr1_, c2 = ctr2_, c3 = ctr3_;
    uint32_t k0 = key0_, k1 = key1_;
    for (int r = 0; r < 10; ++r) {
      philox_round(c0, c1, c2, c3, k0, k1);
      k0 += 0x9E3779B9u;
      k1 += 0xBB67AE85u;
    }
    out_[0] = c0; out_[1] = c1; out_[2] = c2; out_[3] = c3;
    have_ = 4;
    if (++ctr0_ == 0) ++ctr1_;  // 64-bit per-stream counter
  }

  uint32_t key0_ = 0, key1_ = 0;
  uint32_t ctr0_ = 0, ctr1_ = 0;  // position within the stream
  uint32_t ctr2_ = 0, ctr3_ = 0;  // stream id
  uint32_t out_[4] = {};
  int have_ = 0;
};

}  // namespace pinnlab
