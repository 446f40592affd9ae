#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace statesmix {

// Counter-based SplitMix64. Output k of a stream seeded with s is
// finalize(s + (k + 1) * 0x9e3779b97f4a7c15); the archive version byte pins
// this generator and the normal transform below.
class SplitMix64 {
 public:
  explicit SplitMix64(uint64_t seed) : state_(seed) {}

  uint64_t next() {
    state_ += 0x9e3779b97f4a7c15ULL;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in the open interval (0, 1) with 53 bits of resolution.
  double uniform() {
    return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Box-Muller, cosine branch only: two uniforms per normal deviate.
  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  uint64_t state_;
};

}  // namespace statesmix
