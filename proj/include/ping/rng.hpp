// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace ping {

using Rng = std::mt19937_64;

/// Independent named streams derived from one run seed, so that e.g. data
/// shuffling does not shift when a method consumes extra random numbers.
enum class Stream : std::uint32_t {
  kDataset = 1,
  kImageTeacher,
  kTextTeacher,
  kImageStudent,
  kTextStudent,
  kAdapters,
  kShuffle,
  kAugment,
  kSupportSet,
  kProbe,
};

inline Rng make_rng(std::uint64_t seed, Stream stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  return Rng(seq);
}

/// Uniform index in [0, n) without the implementation-defined behaviour of
/// std::uniform_int_distribution, so streams are portable across libraries.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  const std::uint64_t limit = Rng::max() - (Rng::max() % n);
  std::uint64_t v;
  do {
    v = rng();
  } while (v >= limit);
  return v % n;
}

/// Uniform real in [0, 1) with 53 random bits.
inline double uniform_unit(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Standard normal via Box-Muller (one draw per call; portable).
inline double standard_normal(Rng& rng) {
  constexpr double kTwoPi = 6.283185307179586476925286766559;
  double u1;
  do {
    u1 = uniform_unit(rng);
  } while (u1 <= 0.0);
  const double u2 = uniform_unit(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

}  // namespace ping
