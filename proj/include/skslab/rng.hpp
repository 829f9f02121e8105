#pragma once

#include <array>
#include <cmath>
#include <cstdint>

#include "skslab/vec.hpp"

namespace sks {

// SplitMix64, used for seeding and for the documented stream-splitting rule.
struct SplitMix64 {
  std::uint64_t state;

  std::uint64_t next() {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }
};

// Counter-based stream derivation. Sub-streams (per path, per purpose) are
// obtained as derive_stream(master, salt); the rule is pure arithmetic, so a
// path's stream does not depend on how many workers ran or in what order.
inline std::uint64_t derive_stream(std::uint64_t master, std::uint64_t salt) {
  SplitMix64 sm{master ^ (salt * 0xD1342543DE82EF95ULL + 0x9E3779B97F4A7C15ULL)};
  sm.next();
  return sm.next();
}

namespace stream {
// Salts for the per-path sub-streams.
inline constexpr std::uint64_t common_noise = 0x57u;     // Brownian modes W^k
inline constexpr std::uint64_t particle_brownian = 0x42u;  // independent B_i
inline constexpr std::uint64_t initial_condition = 0x1Cu;  // particle sampling
inline constexpr std::uint64_t sampling = 0x5Au;           // misc test sampling
}  // namespace stream

inline std::uint64_t path_seed(std::uint64_t master_seed, std::uint64_t path_index) {
  return derive_stream(master_seed, 0x100000000ULL + path_index);
}

// xoshiro256** with Box-Muller normals. Draw order is fixed; no
// implementation-defined distributions are used, so output is reproducible
// across standard libraries for a given seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    SplitMix64 sm{seed};
    for (auto& w : s_) w = sm.next();
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // uniform in (0,1]
  double uniform01() {
    return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  }

  // uniform in [lo, hi)
  double uniform(double lo, double hi) { return lo + (hi - lo) * (1.0 - uniform01()); }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = uniform01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  Vec2 normal2() {
    const double a = normal();
    const double b = normal();
    return {a, b};
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  std::array<std::uint64_t, 4> s_{};
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace sks
