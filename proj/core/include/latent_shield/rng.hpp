#pragma once

#include <cstdint>
#include <random>

#include "latent_shield/tensor.hpp"

namespace lshield {

/// Seeded generator with platform-independent draws.
///
/// std::mt19937_64 output is fixed by the standard, but the std::*_distribution
/// adaptors are not, so uniform and normal variates are derived here from the
/// raw 64-bit stream.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Stream for job `index` under `master` (per-image / per-cell streams).
  static Rng derive(std::uint64_t master, std::uint64_t index);

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  /// Standard normal (Box-Muller, one variate per pair of uniforms).
  double normal();

  Tensor normal_tensor(const Shape& shape);
  Tensor uniform_tensor(const Shape& shape, double lo, double hi);

 private:
  std::mt19937_64 engine_;
};

/// SplitMix64 finalizer, used for seed derivation and hashing.
std::uint64_t mix64(std::uint64_t x);

}  // namespace lshield
