#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace kws {

/// Stable 64-bit FNV-1a over raw bytes. Used for splits and seed derivation,
/// so it must never depend on locale or platform.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// Derive an independent stream seed from a base seed and a string key.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view key);

/// Deterministic generator. Wraps mt19937_64 (fully specified by the
/// standard) and does its own float conversion because the standard
/// distributions are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);
  /// Standard normal via Box-Muller.
  double normal();

 private:
  std::mt19937_64 engine_;
};

}  // namespace kws
