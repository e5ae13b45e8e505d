#pragma once

// Deterministic random source. All distributions are hand-rolled on top of
// xoshiro256++ so that seeded runs produce identical streams on every
// platform; std::uniform_real_distribution makes no such guarantee.

#include <cmath>
#include <cstdint>

namespace torsor {

namespace detail {

// SplitMix64 step; used only to expand a user seed into generator state.
inline std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t rotl(std::uint64_t v, int k) {
  return (v << k) | (v >> (64 - k));
}

}  // namespace detail

class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& word : state_) word = detail::splitmix64(x);
  }

  // xoshiro256++ core step.
  std::uint64_t next_u64() {
    const std::uint64_t result = detail::rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = detail::rotl(state_[3], 45);
    return result;
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform in [0, n); unbiased via rejection of the overhang.
  std::uint64_t uniform_int(std::uint64_t n) {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n + 1) % n;
    std::uint64_t v = next_u64();
    while (v > limit) v = next_u64();
    return v % n;
  }

  // Standard normal via Box-Muller; second value of each pair is cached.
  double gaussian() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    constexpr double two_pi = 6.283185307179586476925286766559;
    cached_ = r * std::sin(two_pi * u2);
    has_cached_ = true;
    return r * std::cos(two_pi * u2);
  }

 private:
  std::uint64_t state_[4];
  double cached_ = 0.0;
  bool has_cached_ = false;
};

// Deterministic sub-stream seed for item `salt` under a master seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t x = seed ^ (salt + 0x9e3779b97f4a7c15ULL) * 0xff51afd7ed558ccdULL;
  std::uint64_t a = detail::splitmix64(x);
  return detail::splitmix64(x) ^ a;
}

}  // namespace torsor
