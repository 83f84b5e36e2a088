#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace mtpl {

/// Seeded random source used everywhere a run needs randomness.
///
/// Draws are built directly from the raw 64-bit engine output rather than the
/// std:: distributions, whose algorithms are implementation-defined. That keeps
/// a (seed, call sequence) pair reproducible across standard libraries.
class Rng {
public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  /// Independent stream for a named consumer. Derivation only depends on the
  /// parent seed and the name, so adding or reordering consumers does not
  /// perturb the others.
  static Rng substream(std::uint64_t seed, std::string_view name);

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t uniform_index(std::uint64_t n);

  /// Standard normal via Box-Muller (second value cached).
  double normal();

private:
  std::mt19937_64 engine_;
  double cached_normal_ = 0.0;
  bool has_cached_ = false;
};

/// splitmix64 finalizer, used for seed derivation.
std::uint64_t mix64(std::uint64_t x);

}  // namespace mtpl
