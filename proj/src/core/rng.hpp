#pragma once

#include <cstdint>

namespace aseg {

// Deterministic 64-bit generator (splitmix64). The draw sequence depends only
// on the seed, never on standard-library internals, so identical seeds give
// identical streams everywhere.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 53-bit resolution.
  double next_uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller; two uniforms per pair, second value cached.
  double next_gaussian();

  // Uniform integer in [0, bound), rejection-corrected.
  uint64_t next_below(uint64_t bound);

  // Derives a seed for an independent stream.
  uint64_t fork_seed() { return next_u64(); }

 private:
  uint64_t state_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace aseg
