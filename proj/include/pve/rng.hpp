#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace pve {

// Deterministic, platform-independent generator: xoshiro256++ seeded through
// splitmix64.  Streams derived from (seed, stream_id) are statistically
// independent, which gives every simulation replicate its own generator no
// matter how work is scheduled across threads.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) { seed_state(seed); }

  static Rng stream(std::uint64_t seed, std::uint64_t stream_id) {
    // Fold the stream id into the seed with a distinct odd multiplier so
    // stream 0 of seed s+1 never collides with stream 1 of seed s.
    return Rng(seed ^ (0x9e3779b97f4a7c15ULL * (stream_id + 0x2545f4914f6cdd1dULL)));
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform on the open interval (0, 1); never returns an exact 0 or 1.
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller; the paired value is cached.
  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  void seed_state(std::uint64_t seed) {
    // splitmix64 expansion; guaranteed to avoid the all-zero state.
    std::uint64_t z = seed;
    for (auto& word : s_) {
      z += 0x9e3779b97f4a7c15ULL;
      std::uint64_t x = z;
      x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
      x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
      word = x ^ (x >> 31);
    }
    if ((s_[0] | s_[1] | s_[2] | s_[3]) == 0) s_[0] = 1;
  }

  std::uint64_t s_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace pve
