// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "feddq/errors.hpp"
#include "feddq/param_vector.hpp"
#include "feddq/random.hpp"

namespace feddq {

inline constexpr int kMaxBitWidth = 16;

/// Min/max summary of a coordinate vector. range == vmax - vmin exactly.
struct range_stat {
  double vmin = 0.0;
  double vmax = 0.0;
  double range = 0.0;
};

inline range_stat compute_range(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("compute_range: empty vector");
  double lo = v[0];
  double hi = v[0];
  for (double x : v) {
    if (!std::isfinite(x)) throw std::invalid_argument("compute_range: non-finite coordinate");
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  return {lo, hi, hi - lo};
}

/// Stochastically quantized vector: every coordinate reduced to an index on
/// the uniform grid of s = 2^N - 1 sections spanning [vmin, vmax].
///
/// bit_width 0 is the degenerate form for constant vectors: no indices are
/// stored and vmin == vmax carries the single value.
struct quantized_payload {
  std::uint8_t bit_width = 0;  // N, 0..16
  double vmin = 0.0;
  double vmax = 0.0;
  std::uint64_t count = 0;  // d
  std::vector<std::uint32_t> indices;  // empty iff bit_width == 0

  /// Quantization level s = 2^N - 1 (number of sections).
  std::uint64_t level() const noexcept { return (std::uint64_t{1} << bit_width) - 1; }

  friend bool operator==(const quantized_payload&, const quantized_payload&) = default;
};

/// Stochastic uniform quantization of v onto the 2^N - 1 section grid over
/// [min v, max v]. A coordinate sitting in a section [h', h''] rounds up to
/// h'' with probability (x - h') / (h'' - h') and down to h' otherwise, so
/// the result is unbiased given v. Coordinates on a section boundary stay
/// put; v's extremes map to the grid ends exactly.
///
/// A constant vector (range 0) yields the bit_width 0 payload regardless of
/// the requested width. Consumes one draw from rng per coordinate otherwise.
inline quantized_payload quantize(std::span<const double> v, int bit_width, random_stream& rng) {
  if (bit_width < 1 || bit_width > kMaxBitWidth)
    throw std::invalid_argument("quantize: bit width must be in [1, 16], got " +
                                std::to_string(bit_width));
  const range_stat rs = compute_range(v);

  quantized_payload p;
  p.count = v.size();
  p.vmin = rs.vmin;
  p.vmax = rs.vmax;

  const std::uint64_t sections = (std::uint64_t{1} << bit_width) - 1;
  const double width = rs.range / static_cast<double>(sections);
  if (rs.range == 0.0 || width == 0.0) {
    p.bit_width = 0;
    p.vmax = p.vmin;
    return p;
  }

  p.bit_width = static_cast<std::uint8_t>(bit_width);
  p.indices.resize(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double offset = (v[i] - rs.vmin) / width;
    if (offset < 0.0) offset = 0.0;
    std::uint64_t k = static_cast<std::uint64_t>(offset);
    if (k > sections) k = sections;
    const double lower = rs.vmin + static_cast<double>(k) * width;
    double p_up = (v[i] - lower) / width;
    if (p_up < 0.0) p_up = 0.0;
    if (p_up > 1.0) p_up = 1.0;
    std::uint64_t idx = k + (rng.next_unit() < p_up ? 1 : 0);
    if (idx > sections) idx = sections;
    p.indices[i] = static_cast<std::uint32_t>(idx);
  }
  return p;
}

/// Reconstructs grid values vmin + index * (range / s); index s gives vmax
/// exactly. Every output lies in [vmin, vmax].
inline param_vector dequantize(const quantized_payload& p) {
  if (!std::isfinite(p.vmin) || !std::isfinite(p.vmax) || p.vmin > p.vmax)
    throw std::invalid_argument("dequantize: invalid payload range");
  if (p.bit_width == 0) {
    if (!p.indices.empty()) throw std::invalid_argument("dequantize: degenerate payload with indices");
    return param_vector(p.count, p.vmin);
  }
  if (p.bit_width > kMaxBitWidth)
    throw std::invalid_argument("dequantize: bit width out of range");
  if (p.indices.size() != p.count)
    throw dimension_error(p.count, p.indices.size(), "payload indices");

  const std::uint64_t sections = p.level();
  const double width = (p.vmax - p.vmin) / static_cast<double>(sections);
  param_vector out(p.count);
  for (std::size_t i = 0; i < p.indices.size(); ++i) {
    const std::uint32_t idx = p.indices[i];
    if (idx > sections)
      throw std::invalid_argument("dequantize: index " + std::to_string(idx) +
                                  " exceeds level " + std::to_string(sections));
    out[i] = (idx == sections) ? p.vmax : p.vmin + static_cast<double>(idx) * width;
  }
  return out;
}

/// ceil(log2(v)) for integers v >= 1.
inline int ceil_log2_u64(std::uint64_t v) noexcept {
  if (v <= 1) return 0;
  return std::bit_width(v - 1);
}

/// Accounting model for one quantized uplink: d * ceil(log2(s + 1)) + 32
/// bits. This is the cost charged in all comparisons; the actual framed
/// size on the wire is reported separately as wire bits.
inline std::uint64_t paper_bit_cost(std::uint64_t d, std::uint64_t s) {
  if (d < 1 || s < 1) throw std::invalid_argument("paper_bit_cost: requires d >= 1 and s >= 1");
  return d * static_cast<std::uint64_t>(ceil_log2_u64(s + 1)) + 32;
}

}  // namespace feddq
