#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace temsim {

// Reproducibility contract: every stochastic draw comes from a substream
// keyed by (seed, purpose, agent, slot), so results do not depend on the
// order in which agents are evaluated.  std::normal_distribution is
// implementation-defined, so the normal variate is generated explicitly.

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Counter-based substream: state advances through splitmix64.
class RngStream {
 public:
  explicit RngStream(std::uint64_t key) : state_(splitmix64(key)) {}

  std::uint64_t next_u64() {
    state_ = splitmix64(state_);
    return state_;
  }

  /// Uniform double in (0, 1].
  double next_unit() {
    // 53 mantissa bits; +1 keeps the draw strictly positive for log().
    return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller.
  double next_normal() {
    const double u1 = next_unit();
    const double u2 = next_unit();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::uint64_t state_;
};

/// Builds the substream for one (purpose, agent, slot) triple.
inline RngStream substream(std::uint64_t seed, std::string_view purpose,
                           std::string_view agent, int slot_start) {
  std::uint64_t h = fnv1a(purpose, splitmix64(seed));
  h = fnv1a(agent, h);
  h = splitmix64(h ^ static_cast<std::uint64_t>(static_cast<std::int64_t>(slot_start)));
  return RngStream(h);
}

}  // namespace temsim
