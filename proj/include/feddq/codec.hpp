// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "feddq/errors.hpp"
#include "feddq/quantizer.hpp"

namespace feddq {

// Uplink frame, little-endian throughout:
//
//   "FDQ1" | N (1 byte) | count (u64) | vmin (f64) | vmax (f64, iff N >= 1)
//   | packed indices (count * N bits, LSB-first per byte, zero-padded)
//   | CRC-32 of all preceding bytes (u32)
//
// Padding bits after the last index must be zero.

inline constexpr std::array<std::uint8_t, 4> kFrameMagic = {'F', 'D', 'Q', '1'};

namespace detail {

constexpr std::array<std::uint32_t, 256> make_crc32_table() {
  std::array<std::uint32_t, 256> table{};
  for (std::uint32_t i = 0; i < 256; ++i) {
    std::uint32_t c = i;
    for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
    table[i] = c;
  }
  return table;
}

inline constexpr auto kCrc32Table = make_crc32_table();

// Writes value at out[pos] in little-endian order and advances pos.
template <typename T>
void store_le(std::vector<std::uint8_t>& out, std::size_t& pos, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::array<std::uint8_t, sizeof(T)> raw{};
  std::memcpy(raw.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = sizeof(T); i-- > 0;) out[pos++] = raw[i];
  } else {
    std::memcpy(out.data() + pos, raw.data(), sizeof(T));
    pos += sizeof(T);
  }
}

template <typename T>
T read_le(std::span<const std::uint8_t> bytes, std::size_t offset) {
  std::array<std::uint8_t, sizeof(T)> raw{};
  std::memcpy(raw.data(), bytes.data() + offset, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(raw[i], raw[sizeof(T) - 1 - i]);
  }
  T value;
  std::memcpy(&value, raw.data(), sizeof(T));
  return value;
}

}  // namespace detail

/// CRC-32 (IEEE reflected, zlib-compatible).
inline std::uint32_t crc32(std::span<const std::uint8_t> bytes) noexcept {
  std::uint32_t c = 0xffffffffu;
  for (std::uint8_t b : bytes) c = detail::kCrc32Table[(c ^ b) & 0xffu] ^ (c >> 8);
  return c ^ 0xffffffffu;
}

/// Exact frame size for a payload of the given shape.
inline std::size_t frame_size_bytes(int bit_width, std::uint64_t count) noexcept {
  const std::size_t header = 4 + 1 + 8 + 8 + (bit_width >= 1 ? 8 : 0);
  const std::size_t body =
      bit_width >= 1 ? static_cast<std::size_t>((count * static_cast<std::uint64_t>(bit_width) + 7) / 8) : 0;
  return header + body + 4;
}

inline std::vector<std::uint8_t> encode_frame(const quantized_payload& p) {
  if (p.bit_width > kMaxBitWidth) throw std::invalid_argument("encode_frame: bit width out of range");
  if (p.bit_width == 0 && (!p.indices.empty() || p.vmin != p.vmax))
    throw std::invalid_argument("encode_frame: malformed degenerate payload");
  if (p.bit_width >= 1 && p.indices.size() != p.count)
    throw dimension_error(p.count, p.indices.size(), "payload indices");

  std::vector<std::uint8_t> out(frame_size_bytes(p.bit_width, p.count), 0);
  std::size_t pos = 0;
  for (std::uint8_t b : kFrameMagic) out[pos++] = b;
  out[pos++] = p.bit_width;
  detail::store_le(out, pos, static_cast<std::uint64_t>(p.count));
  detail::store_le(out, pos, p.vmin);
  if (p.bit_width >= 1) {
    detail::store_le(out, pos, p.vmax);
    const std::size_t body_start = pos;
    std::size_t cursor = 0;  // bit position within the body
    for (std::uint32_t idx : p.indices) {
      for (int b = 0; b < p.bit_width; ++b, ++cursor) {
        if ((idx >> b) & 1u) out[body_start + cursor / 8] |= static_cast<std::uint8_t>(1u << (cursor % 8));
      }
    }
    pos = body_start + (cursor + 7) / 8;
  }
  detail::store_le(out, pos, crc32({out.data(), pos}));
  return out;
}

inline quantized_payload decode_frame(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kFrameMagic.size())
    throw codec_error(codec_fault::truncated, "frame shorter than magic");
  if (!std::equal(kFrameMagic.begin(), kFrameMagic.end(), bytes.begin()))
    throw codec_error(codec_fault::bad_magic, "expected FDQ1");

  constexpr std::size_t kFixedHeader = 4 + 1 + 8 + 8;
  if (bytes.size() < kFixedHeader + 4)
    throw codec_error(codec_fault::truncated, "frame shorter than header and checksum");

  quantized_payload p;
  p.bit_width = bytes[4];
  if (p.bit_width > kMaxBitWidth)
    throw codec_error(codec_fault::bad_bit_width,
                      "bit width " + std::to_string(p.bit_width) + " exceeds 16");
  p.count = detail::read_le<std::uint64_t>(bytes, 5);
  p.vmin = detail::read_le<double>(bytes, 13);

  // Reject counts whose packed body could not fit in any real frame before
  // computing byte sizes from them.
  if (p.bit_width >= 1 && p.count > (std::uint64_t{1} << 56))
    throw codec_error(codec_fault::truncated, "count too large for frame");

  std::size_t offset = kFixedHeader;
  if (p.bit_width >= 1) {
    if (bytes.size() < offset + 8 + 4)
      throw codec_error(codec_fault::truncated, "frame missing vmax");
    p.vmax = detail::read_le<double>(bytes, offset);
    offset += 8;
  } else {
    p.vmax = p.vmin;
  }

  const std::uint64_t body_bits = p.count * static_cast<std::uint64_t>(p.bit_width);
  const std::size_t body_bytes = static_cast<std::size_t>((body_bits + 7) / 8);
  if (bytes.size() != offset + body_bytes + 4)
    throw codec_error(codec_fault::truncated,
                      "expected " + std::to_string(offset + body_bytes + 4) + " bytes, got " +
                          std::to_string(bytes.size()));

  // Integrity before semantics: a frame corrupted in transit reports a
  // checksum fault, not whatever field the corruption happened to land in.
  const std::uint32_t stored_crc = detail::read_le<std::uint32_t>(bytes, bytes.size() - 4);
  const std::uint32_t actual_crc = crc32(bytes.subspan(0, bytes.size() - 4));
  if (stored_crc != actual_crc) throw codec_error(codec_fault::bad_crc, "CRC-32 mismatch");

  if (!std::isfinite(p.vmin) || !std::isfinite(p.vmax) || p.vmin > p.vmax)
    throw codec_error(codec_fault::bad_range, "vmin/vmax not finite or vmin > vmax");

  if (p.bit_width >= 1) {
    const std::span<const std::uint8_t> body = bytes.subspan(offset, body_bytes);
    p.indices.resize(static_cast<std::size_t>(p.count));
    std::size_t cursor = 0;
    for (std::size_t i = 0; i < p.indices.size(); ++i) {
      std::uint32_t idx = 0;
      for (int b = 0; b < p.bit_width; ++b, ++cursor) {
        idx |= static_cast<std::uint32_t>((body[cursor / 8] >> (cursor % 8)) & 1u) << b;
      }
      p.indices[i] = idx;
    }
    // Nonzero padding would decode as indices beyond count.
    for (std::size_t bit = cursor; bit < body_bytes * 8; ++bit) {
      if ((body[bit / 8] >> (bit % 8)) & 1u)
        throw codec_error(codec_fault::index_overflow, "nonzero padding past final index");
    }
  }
  return p;
}

}  // namespace feddq
