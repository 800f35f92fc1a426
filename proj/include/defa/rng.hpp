#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace defa {

// SplitMix64. Chosen because it is a few lines in any language, so workloads
// reproduce bit-exactly outside this code base.
class SplitMix64 {
 public:
  explicit SplitMix64(uint64_t state) : state_(state) {}

  static uint64_t mix(uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  uint64_t next() {
    state_ += 0x9E3779B97F4A7C15ULL;
    return mix(state_);
  }

  // 53-bit uniform in [0, 1).
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller, cosine branch only: two draws per sample.
  double gaussian() {
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  uint64_t state_;
};

// Independent stream per (seed, block, tensor id).
inline SplitMix64 make_stream(uint64_t seed, uint32_t block, uint32_t tensor) {
  const uint64_t a = SplitMix64::mix(seed + 0x9E3779B97F4A7C15ULL);
  const uint64_t b = SplitMix64::mix(((static_cast<uint64_t>(block) << 8) | tensor) + 0x9E3779B97F4A7C15ULL);
  return SplitMix64(a ^ b);
}

}  // namespace defa
