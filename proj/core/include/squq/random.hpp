#pragma once

#include <cstdint>
#include <string_view>

namespace squq {

/// SplitMix64 generator with a fixed, documented output so corpora and
/// simulations reproduce across platforms and languages.
///
///   state += 0x9E3779B97F4A7C15
///   z = state
///   z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
///   z = (z ^ (z >> 27)) * 0x94D049BB133111EB
///   return z ^ (z >> 31)
///
/// Stream k of seed s starts from state mix64(s) ^ mix64(k + 0x632BE59BD9B4E019),
/// where mix64 is the three-line finalizer above applied to its argument.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t state) noexcept : state_(state) {}

  static SplitMix64 stream(std::uint64_t seed, std::uint64_t index) noexcept;

  std::uint64_t next() noexcept;
  /// Top 53 bits scaled into [0, 1).
  double uniform01() noexcept;
  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform01(); }
  /// Uniform integer in [0, bound) by 128-bit multiply-shift. bound > 0.
  std::uint64_t below(std::uint64_t bound) noexcept;
  /// Exponential(1) by inversion: -log(1 - u).
  double exponential() noexcept;
  /// Standard normal, Box-Muller cosine branch, two uniforms per draw.
  double normal() noexcept;

  std::uint64_t state() const noexcept { return state_; }

 private:
  std::uint64_t state_;
};

std::uint64_t mix64(std::uint64_t z) noexcept;

/// FNV-1a 64-bit hash of the UTF-8 bytes.
std::uint64_t fnv1a64(std::string_view bytes) noexcept;

}  // namespace squq
