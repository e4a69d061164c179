#pragma once

// Seeded generation of synthetic templates.
//
// The generator is xoshiro256** (Blackman & Vigna) with its state filled from
// SplitMix64 of the seed. Both algorithms and all constants below are frozen:
// an archived seed must reproduce its synthetic template forever. This is a
// statistical generator. A deployment that hands out templates to real users
// would substitute a cryptographically strong source behind the same
// interface (`next_u64`).

#include <array>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <unordered_set>
#include <vector>

#include "cancelmin/minutiae.hpp"

namespace cancelmin {

inline constexpr std::uint64_t splitmix64(std::uint64_t& state) noexcept {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// Derives an independent sub-seed from a master seed and a tuple of
/// components (finger index, N, role tag, ...). Every component is folded in
/// through a full SplitMix64 round, so changing any one of them moves the
/// result to an unrelated stream.
inline std::uint64_t mix_seed(std::uint64_t master, std::initializer_list<std::uint64_t> parts) noexcept {
  std::uint64_t state = master;
  std::uint64_t h = splitmix64(state);
  for (std::uint64_t p : parts) {
    state = h ^ (p * 0xD6E8FEB86659FD93ull);
    h = splitmix64(state);
  }
  return h;
}

class SeededGenerator {
public:
  explicit SeededGenerator(std::uint64_t seed) noexcept : seed_(seed) {
    std::uint64_t sm = seed;
    for (auto& w : s_) w = splitmix64(sm);
  }

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() noexcept {
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

  /// Unbiased draw in [0, n): raw values in the incomplete top block of the
  /// 64-bit range are rejected and redrawn.
  std::uint64_t next_uniform(std::uint64_t n) {
    if (n == 0) throw ContractError("next_uniform: n must be >= 1");
    const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % n + 1) % n;  // last accepted raw value
    std::uint64_t r;
    do {
      r = next_u64();
    } while (r > limit);
    return r % n;
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double next_unit() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform double in [lo, hi).
  double next_real(double lo, double hi) noexcept { return lo + (hi - lo) * next_unit(); }

  /// Standard normal via Box-Muller; consumes exactly two raw draws per call.
  double next_gaussian() noexcept {
    const double u1 = 1.0 - next_unit();  // (0, 1]
    const double u2 = next_unit();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  friend bool operator==(const SeededGenerator&, const SeededGenerator&) = default;

private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept { return (x << k) | (x >> (64 - k)); }

  std::uint64_t seed_;
  std::array<std::uint64_t, 4> s_{};
};

inline std::uint64_t lattice_capacity(int width, int height) noexcept {
  return static_cast<std::uint64_t>(width) * static_cast<std::uint64_t>(height) * 360u;
}

/// Draws one minutia uniformly from the lattice, in the fixed order x, y, theta.
inline Minutia draw_minutia(SeededGenerator& g, int width, int height) {
  Minutia m;
  m.x = static_cast<int>(g.next_uniform(static_cast<std::uint64_t>(width)));
  m.y = static_cast<int>(g.next_uniform(static_cast<std::uint64_t>(height)));
  m.theta = static_cast<int>(g.next_uniform(360));
  return m;
}

/// Draws n distinct minutiae uniformly from the width x height x 360 lattice.
/// Exact duplicates are redrawn; order is draw order.
inline std::vector<Minutia> draw_distinct_minutiae(SeededGenerator& g, int width, int height, std::uint64_t n) {
  if (width < 1 || height < 1) throw ContractError("synthesize: width and height must be >= 1");
  if (n > lattice_capacity(width, height)) {
    throw ContractError("synthesize: " + std::to_string(n) + " distinct minutiae do not fit in a " +
                        std::to_string(width) + "x" + std::to_string(height) + "x360 lattice");
  }
  std::vector<Minutia> out;
  out.reserve(n);
  std::unordered_set<std::uint64_t> seen;
  seen.reserve(n * 2);
  while (out.size() < n) {
    Minutia m = draw_minutia(g, width, height);
    if (seen.insert(lattice_key(m, height)).second) out.push_back(m);
  }
  return out;
}

/// Builds a synthetic template of exactly n minutiae. The generator's seed is
/// recorded in the provenance.
inline Template synthesize(SeededGenerator& g, int width, int height, std::uint64_t n) {
  Provenance p;
  p.st_seed = g.seed();
  return Template::create(draw_distinct_minutiae(g, width, height, n), width, height, TemplateKind::Synthetic,
                          std::move(p));
}

inline Template synthesize(std::uint64_t seed, int width, int height, std::uint64_t n) {
  SeededGenerator g(seed);
  return synthesize(g, width, height, n);
}

}  // namespace cancelmin
