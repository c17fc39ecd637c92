#pragma once

// Counter-based random number generation (Philox4x32-10).
//
// Every stream is identified by a (seed, stream) pair; draws are a pure
// function of (seed, stream, draw index), so instance sets and training
// runs are reproducible across machines and independent of platform RNGs.
// Sub-streams are derived with derive(), a splitmix64 finalizer, so
// seed_i = derive(seed, i) gives statistically independent generators.
//
// Draw accounting, fixed for reproducibility:
//   - next_u32 consumes one lane of the current 128-bit counter block
//   - uniform() consumes one u64 (two lanes), giving 53 random bits
//   - normal() consumes two uniforms (Box-Muller, sine branch discarded)

#include <cmath>
#include <cstdint>

namespace jampr {

class Rng {
 public:
  explicit Rng(uint64_t seed, uint64_t stream = 0)
      : key0_(static_cast<uint32_t>(seed)),
        key1_(static_cast<uint32_t>(seed >> 32)),
        stream_(stream) {}

  // splitmix64 finalizer; used to derive per-item seeds from a master seed.
  static uint64_t derive(uint64_t seed, uint64_t salt) {
    uint64_t z = seed + 0x9E3779B97F4A7C15ull * (salt + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  uint32_t next_u32() {
    if (lane_ == 0) fill_block();
    uint32_t out = block_[lane_];
    lane_ = (lane_ + 1) & 3;
    return out;
  }

  uint64_t next_u64() {
    uint64_t lo = next_u32();
    uint64_t hi = next_u32();
    return (hi << 32) | lo;
  }

  // Uniform in [0, 1), 53 bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  // Integer in [0, n); n must be > 0. floor(u * n) on a 53-bit uniform: the
  // bias is < n * 2^-53, irrelevant for the small n used here.
  uint64_t below(uint64_t n) {
    auto k = static_cast<uint64_t>(uniform() * static_cast<double>(n));
    return k >= n ? n - 1 : k;
  }

  // Standard normal via Box-Muller (cosine branch only).
  double normal() {
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
  }

  double normal(double mu, double sigma) { return mu + sigma * normal(); }

 private:
  void fill_block() {
    uint32_t c0 = static_cast<uint32_t>(n_);
    uint32_t c1 = static_cast<uint32_t>(n_ >> 32);
    uint32_t c2 = static_cast<uint32_t>(stream_);
    uint32_t c3 = static_cast<uint32_t>(stream_ >> 32);
    uint32_t k0 = key0_, k1 = key1_;
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        k0 += 0x9E3779B9u;
        k1 += 0xBB67AE85u;
      }
      uint64_t p0 = 0xD2511F53ull * c0;
      uint64_t p1 = 0xCD9E8D57ull * c2;
      uint32_t hi0 = static_cast<uint32_t>(p0 >> 32), lo0 = static_cast<uint32_t>(p0);
      uint32_t hi1 = static_cast<uint32_t>(p1 >> 32), lo1 = static_cast<uint32_t>(p1);
      uint32_t n0 = hi1 ^ c1 ^ k0;
      uint32_t n1 = lo1;
      uint32_t n2 = hi0 ^ c3 ^ k1;
      uint32_t n3 = lo0;
      c0 = n0;
      c1 = n1;
      c2 = n2;
      c3 = n3;
    }
    block_[0] = c0;
    block_[1] = c1;
    block_[2] = c2;
    block_[3] = c3;
    ++n_;
  }

  uint32_t key0_, key1_;
  uint64_t stream_;
  uint64_t n_ = 0;
  uint32_t block_[4] = {};
  int lane_ = 0;
};

}  // namespace jampr
