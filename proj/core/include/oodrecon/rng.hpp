#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace oodrecon {

/// Deterministic random source. Wraps std::mt19937_64 (whose raw output
/// sequence is pinned by the standard) but implements all distributions
/// locally, because the std::*_distribution adapters are
/// implementation-defined and would break cross-toolchain reproducibility.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform double in [0, 1), 53 bits of randomness.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be > 0. Rejection sampling keeps the
  /// result unbiased and independent of the platform.
  std::uint64_t bounded(std::uint64_t n);

  /// Standard normal deviate, Marsaglia polar method.
  double normal();

  float normal_f() { return static_cast<float>(normal()); }

private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Stable 64-bit sub-seed derivation: mixes a tag (or index) into a base seed
/// so that independent random streams never alias.
std::uint64_t derive_seed(std::uint64_t base, std::string_view tag);
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

}  // namespace oodrecon
