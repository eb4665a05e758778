// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "feddq/errors.hpp"
#include "feddq/quantizer.hpp"

namespace feddq {

enum class policy_kind { feddq, fixed, ascending, full_precision };

inline const char* to_string(policy_kind k) {
  switch (k) {
    case policy_kind::feddq: return "feddq";
    case policy_kind::fixed: return "fixed";
    case policy_kind::ascending: return "ascending";
    case policy_kind::full_precision: return "full-precision";
  }
  return "?";
}

/// Bit-width selection settings.
///
/// feddq picks ceil(log2(range / resolution)) bits from each client's own
/// update range; fixed always uses fixed_bits; ascending grows the level
/// with the inverse loss ratio, s_m = ceil(s0 * sqrt(f0 / f_m));
/// full-precision bypasses quantization. All quantized decisions are
/// clamped to [bit_min, bit_max].
struct policy_config {
  policy_kind kind = policy_kind::feddq;
  double resolution = 0.005;
  int fixed_bits = 8;
  std::uint64_t s0 = 1;
  int bit_min = 1;
  int bit_max = kMaxBitWidth;

  void validate() const {
    if (bit_min < 1 || bit_max > kMaxBitWidth || bit_min > bit_max)
      throw config_error("policy.bit_min/bit_max", "require 1 <= bit_min <= bit_max <= 16");
    if (kind == policy_kind::feddq && !(resolution > 0.0))
      throw config_error("policy.resolution", "must be positive");
    if (kind == policy_kind::fixed && (fixed_bits < 1 || fixed_bits > kMaxBitWidth))
      throw config_error("policy.fixed_bits", "must be in [1, 16]");
    if (kind == policy_kind::ascending && s0 < 1)
      throw config_error("policy.s0", "must be >= 1");
  }
};

/// One bit-width decision. level is always the realized 2^bits - 1 after
/// clamping (0 for the full-precision bypass).
struct bit_decision {
  std::size_t client_id = 0;
  std::size_t round = 0;
  int bits = 0;
  double range = 0.0;
  std::uint64_t level = 0;  // s = 2^bits - 1
  bool bypass = false;
};

/// Per-run policy state, updated by the orchestrator between rounds.
struct policy_state {
  bool have_initial_loss = false;
  double initial_loss = 0.0;  // f0, recorded at round 0
  std::size_t round = 0;
  std::vector<bit_decision> last_decisions;
};

namespace detail {

// Smallest integer N with 2^N >= x, exact for positive finite x. The libm
// estimate is corrected against exact powers of two.
inline int ceil_log2_positive(double x) {
  int n = static_cast<int>(std::ceil(std::log2(x)));
  while (n > -1074 && std::ldexp(1.0, n - 1) >= x) --n;
  while (std::ldexp(1.0, n) < x) ++n;
  return n;
}

inline bit_decision clamped_decision(int bits, double range, const policy_config& cfg) {
  bits = std::clamp(bits, cfg.bit_min, cfg.bit_max);
  bit_decision d;
  d.bits = bits;
  d.range = range;
  d.level = (std::uint64_t{1} << bits) - 1;
  return d;
}

}  // namespace detail

/// Range-driven selection: bits = ceil(log2(range / resolution)), clamped.
/// A zero range maps to bit_min; the quantizer handles the degenerate
/// payload downstream.
inline bit_decision decide_bits_feddq(double range, const policy_config& cfg) {
  if (cfg.kind != policy_kind::feddq) throw std::invalid_argument("decide_bits_feddq: wrong policy kind");
  if (!(range >= 0.0) || !std::isfinite(range))
    throw std::invalid_argument("decide_bits_feddq: range must be finite and nonnegative");
  if (range == 0.0) return detail::clamped_decision(cfg.bit_min, range, cfg);
  const double ratio = range / cfg.resolution;
  if (!std::isfinite(ratio)) return detail::clamped_decision(cfg.bit_max, range, cfg);
  return detail::clamped_decision(detail::ceil_log2_positive(ratio), range, cfg);
}

inline bit_decision decide_bits_fixed(const policy_config& cfg) {
  if (cfg.kind != policy_kind::fixed) throw std::invalid_argument("decide_bits_fixed: wrong policy kind");
  return detail::clamped_decision(cfg.fixed_bits, 0.0, cfg);
}

/// Loss-driven ascending baseline: s_m = ceil(s0 * sqrt(f0 / f_m)), with
/// bits = ceil(log2(s_m + 1)) clamped. Bits never decrease while the loss
/// keeps improving.
inline bit_decision decide_bits_ascending(double current_loss, const policy_state& state,
                                          const policy_config& cfg) {
  if (cfg.kind != policy_kind::ascending)
    throw std::invalid_argument("decide_bits_ascending: wrong policy kind");
  if (!(current_loss > 0.0) || !std::isfinite(current_loss))
    throw std::invalid_argument("decide_bits_ascending: nonpositive loss, run has diverged");
  if (!state.have_initial_loss)
    throw std::invalid_argument("decide_bits_ascending: initial loss not recorded");

  const double raw_level =
      std::ceil(static_cast<double>(cfg.s0) * std::sqrt(state.initial_loss / current_loss));
  int bits;
  if (raw_level >= static_cast<double>(std::uint64_t{1} << 62)) {
    bits = cfg.bit_max;
  } else {
    const auto level = static_cast<std::uint64_t>(std::max(raw_level, 1.0));
    bits = ceil_log2_u64(level + 1);
  }
  return detail::clamped_decision(bits, 0.0, cfg);
}

/// Unquantized reference. Accounting charges 64 bits per coordinate.
inline bit_decision decide_bits_full_precision() {
  bit_decision d;
  d.bits = 64;
  d.bypass = true;
  return d;
}

/// Paper-model uplink cost of one decision for a d-coordinate update: the
/// quantized cost for level s, 64d for the bypass, or the bare 32-bit
/// header when a degenerate update carried no index bits.
inline std::uint64_t decision_paper_bits(std::uint64_t d, const bit_decision& decision) {
  if (decision.bypass) return 64 * d;
  if (decision.level == 0) return 32;
  return paper_bit_cost(d, decision.level);
}

}  // namespace feddq
