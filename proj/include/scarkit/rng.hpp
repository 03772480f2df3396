#pragma once

#include <cstdint>
#include <random>

namespace scarkit {

/// splitmix64 finalizer.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Seed of trajectory `index` under `base_seed`:
/// splitmix64(base_seed ^ splitmix64(index)).
inline std::uint64_t trajectory_seed(std::uint64_t base_seed, std::uint64_t index) {
  return splitmix64(base_seed ^ splitmix64(index));
}

/// mt19937_64 stream with the uniform mapping fixed to (x >> 11) * 2^-53, so
/// draws do not depend on the standard library's distribution internals.
class Stream {
 public:
  explicit Stream(std::uint64_t seed) : gen_(seed) {}
  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
  /// Uniform in (0, 1].
  double uniform_open_low() { return 1.0 - uniform(); }

 private:
  std::mt19937_64 gen_;
};

}  // namespace scarkit
