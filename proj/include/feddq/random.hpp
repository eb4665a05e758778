// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace feddq {

namespace detail {

// SplitMix64 finalizer (Stafford mix13). Full-avalanche 64-bit permutation.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<std::uint8_t>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

/// Deterministic counter-based random stream.
///
/// A stream is identified by (run_seed, round, client, purpose); equal
/// identifiers replay the same draw sequence and distinct identifiers give
/// independent sequences. Draws are successive SplitMix64 outputs from the
/// derived key, so a stream is cheap to construct per use site and is never
/// shared between concurrent callers.
class random_stream {
 public:
  explicit random_stream(std::uint64_t key) noexcept : state_(key) {}

  static constexpr std::uint64_t derive_key(std::uint64_t run_seed, std::uint64_t round,
                                            std::uint64_t client, std::string_view purpose) noexcept {
    std::uint64_t h = detail::mix64(run_seed);
    h = detail::mix64(h ^ detail::mix64(round ^ 0x517cc1b727220a95ULL));
    h = detail::mix64(h ^ detail::mix64(client ^ 0x2545f4914f6cdd1dULL));
    h = detail::mix64(h ^ detail::fnv1a64(purpose));
    return h;
  }

  static random_stream keyed(std::uint64_t run_seed, std::uint64_t round, std::uint64_t client,
                             std::string_view purpose) noexcept {
    return random_stream(derive_key(run_seed, round, client, purpose));
  }

  std::uint64_t next_u64() noexcept {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform draw in [0, 1) with 53 random mantissa bits.
  double next_unit() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform draw in [lo, hi).
  double next_uniform(double lo, double hi) noexcept { return lo + (hi - lo) * next_unit(); }

  /// Standard normal draw (Box-Muller; the paired value is cached).
  double next_normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = next_unit();
    double u2 = next_unit();
    while (u1 <= 0.0) u1 = next_unit();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 6.283185307179586476925286766559 * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  /// Uniform integer in [0, bound). Rejection sampling, no modulo bias.
  std::uint64_t next_below(std::uint64_t bound) noexcept {
    if (bound <= 1) return 0;
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
    std::uint64_t draw = next_u64();
    while (draw >= limit) draw = next_u64();
    return draw % bound;
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace feddq
