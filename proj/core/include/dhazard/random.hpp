#pragma once

#include <cstdint>
#include <random>

namespace dhazard {

// Seeded random source. Bounded integers and unit reals are derived from the
// raw 64-bit engine output so results do not depend on the standard library's
// distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform on {0, ..., n - 1}; n must be positive.
  std::uint64_t uniform_index(std::uint64_t n);

  // Uniform on [0, 1).
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

 private:
  std::mt19937_64 engine_;
};

// Mixes a master seed with a stream tag and an index (splitmix64 finalizer),
// so any sub-stream can be regenerated without replaying earlier ones.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index);

}  // namespace dhazard
