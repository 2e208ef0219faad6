#pragma once

#include <cstdint>
#include <vector>

namespace gdformer {

// Deterministic random stream used for masks, initialization, shuffles and
// the synthetic generator. The generator is pinned so that ports in other
// languages reproduce the exact same draws:
//
//   state    : xoshiro256** (Blackman/Vigna), seeded by running splitmix64
//              four times from the 64-bit seed.
//   u64      : one xoshiro256** output.
//   uniform  : (u64 >> 11) * 2^-53, in [0,1).
//   normal   : Box-Muller, sqrt(-2 ln u1) * cos(2 pi u2); u1 clamped to
//              2^-53 when zero; two uniforms consumed per draw, no caching.
//   below(n) : u64 % n.
//   shuffle  : Fisher-Yates, i from n-1 down to 1, j = below(i+1).
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  double uniform();                      // [0, 1)
  double uniform(double lo, double hi);  // [lo, hi)
  double normal();                       // standard normal
  bool bernoulli(double p);              // uniform() < p
  std::uint64_t below(std::uint64_t n);  // [0, n), n >= 1

  template <typename T>
  void shuffle(std::vector<T>& v) {
    if (v.size() < 2) return;
    for (std::size_t i = v.size() - 1; i > 0; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i + 1));
      std::swap(v[i], v[j]);
    }
  }

  // Derives an independent sub-stream seed: splitmix64 output of
  // seed + GOLDEN * (stream + 1). Used for per-epoch / per-window masks.
  static std::uint64_t mix(std::uint64_t seed, std::uint64_t stream);
  static std::uint64_t mix(std::uint64_t seed, std::uint64_t a, std::uint64_t b);

 private:
  std::uint64_t state_[4];
};

// One splitmix64 step; advances `state` and returns the output.
std::uint64_t splitmix64(std::uint64_t& state);

}  // namespace gdformer
