#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace pixelflow {

/// Seeded generator with platform-independent draws. The standard library's
/// distributions are implementation-defined, so uniform and normal variates
/// are derived from the raw 64-bit engine output here. `state()` round-trips
/// through `restore()` exactly.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  /// Standard normal (Box-Muller, one variate per call).
  double normal();

  std::string state() const;
  void restore(const std::string& state);

  /// Child generator whose stream depends on this one's seed material and `key`.
  static Rng derive(std::uint64_t seed, std::uint64_t key);

 private:
  std::mt19937_64 engine_;
};

}  // namespace pixelflow
