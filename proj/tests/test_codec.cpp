// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cstdint>
#include <cstring>
#include <vector>

#include "feddq/codec.hpp"
#include "feddq/quantizer.hpp"
#include "feddq/random.hpp"

using namespace feddq;

namespace {

// Bitwise (table-free) CRC-32, the independent reference for the codec's
// table-driven version.
std::uint32_t crc32_bitwise(const std::uint8_t* data, std::size_t len) {
  std::uint32_t c = 0xffffffffu;
  for (std::size_t i = 0; i < len; ++i) {
    c ^= data[i];
    for (int k = 0; k < 8; ++k) c = (c >> 1) ^ (0xedb88320u & (0u - (c & 1u)));
  }
  return c ^ 0xffffffffu;
}

void refresh_crc(std::vector<std::uint8_t>& frame) {
  const std::uint32_t c = crc32({frame.data(), frame.size() - 4});
  std::memcpy(frame.data() + frame.size() - 4, &c, 4);
}

std::vector<std::uint8_t> le_bytes_u64(std::uint64_t v) {
  std::vector<std::uint8_t> out(8);
  for (int i = 0; i < 8; ++i) out[i] = static_cast<std::uint8_t>(v >> (8 * i));
  return out;
}

std::vector<std::uint8_t> le_bytes_f64(double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  return le_bytes_u64(bits);
}

}  // namespace

TEST_CASE("crc32 matches the published check value and the bitwise form") {
  const char* msg = "123456789";
  REQUIRE(crc32({reinterpret_cast<const std::uint8_t*>(msg), 9}) == 0xCBF43926u);

  auto rng = random_stream::keyed(11, 0, 0, "crc");
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::uint8_t> data(1 + rng.next_below(100));
    for (auto& b : data) b = static_cast<std::uint8_t>(rng.next_below(256));
    REQUIRE(crc32(data) == crc32_bitwise(data.data(), data.size()));
  }
}

TEST_CASE("one-bit frame has the exact documented byte layout") {
  quantized_payload p;
  p.bit_width = 1;
  p.count = 2;
  p.vmin = 0.0;
  p.vmax = 1.0;
  p.indices = {1, 0};

  std::vector<std::uint8_t> expected = {'F', 'D', 'Q', '1', 1};
  for (std::uint8_t b : le_bytes_u64(2)) expected.push_back(b);
  for (std::uint8_t b : le_bytes_f64(0.0)) expected.push_back(b);
  for (std::uint8_t b : le_bytes_f64(1.0)) expected.push_back(b);
  expected.push_back(0x01);  // LSB-first: index 0 -> bit 0, index 1 -> bit 1
  const std::uint32_t crc = crc32_bitwise(expected.data(), expected.size());
  for (int i = 0; i < 4; ++i) expected.push_back(static_cast<std::uint8_t>(crc >> (8 * i)));

  REQUIRE(encode_frame(p) == expected);
  REQUIRE(decode_frame(expected) == p);
}

TEST_CASE("zero-bit frame is exactly 25 bytes and round-trips") {
  quantized_payload p;
  p.bit_width = 0;
  p.count = 5;
  p.vmin = -2.5;
  p.vmax = -2.5;

  const auto frame = encode_frame(p);
  REQUIRE(frame.size() == 25);
  REQUIRE(frame.size() == frame_size_bytes(0, 5));
  REQUIRE(decode_frame(frame) == p);
  REQUIRE(dequantize(decode_frame(frame)) == param_vector(5, -2.5));
}

TEST_CASE("frame size formula matches encoded sizes") {
  auto rng = random_stream::keyed(12, 0, 0, "sizes");
  for (int bits = 1; bits <= 16; ++bits) {
    for (std::uint64_t count : {std::uint64_t{1}, std::uint64_t{7}, std::uint64_t{8},
                                std::uint64_t{51}, std::uint64_t{64}}) {
      std::vector<double> v(count);
      for (double& x : v) x = rng.next_uniform(-1.0, 1.0);
      if (count == 1) v[0] = 0.5;  // single values are degenerate; skip below
      const range_stat rs = compute_range(v);
      if (rs.range == 0.0) continue;
      auto qrng = random_stream::keyed(12, 1, count, "quantize");
      const auto frame = encode_frame(quantize(v, bits, qrng));
      REQUIRE(frame.size() == frame_size_bytes(bits, count));
      REQUIRE(frame.size() == 25 + 8 + (count * static_cast<std::uint64_t>(bits) + 7) / 8);
    }
  }
}

TEST_CASE("random payloads survive encode-decode exactly") {
  auto rng = random_stream::keyed(13, 0, 0, "fuzz");
  for (int trial = 0; trial < 200; ++trial) {
    const int bits = 1 + static_cast<int>(rng.next_below(16));
    const std::size_t count = 1 + rng.next_below(50);
    std::vector<double> v(count);
    const double scale = std::pow(10.0, static_cast<double>(rng.next_below(9)) - 4.0);
    for (double& x : v) x = scale * (rng.next_unit() * 2.0 - 1.0);
    auto qrng = random_stream::keyed(13, 1, static_cast<std::uint64_t>(trial), "quantize");
    const quantized_payload p = quantize(v, bits, qrng);
    const quantized_payload q = decode_frame(encode_frame(p));
    REQUIRE(p == q);
    REQUIRE(dequantize(p) == dequantize(q));
  }
}

TEST_CASE("decoder distinguishes the malformed frame classes") {
  quantized_payload p;
  p.bit_width = 3;
  p.count = 4;
  p.vmin = -1.0;
  p.vmax = 1.0;
  p.indices = {0, 3, 7, 5};
  const std::vector<std::uint8_t> good = encode_frame(p);
  REQUIRE(decode_frame(good) == p);

  SECTION("bad magic") {
    auto bad = good;
    bad[0] = 'X';
    try {
      decode_frame(bad);
      FAIL("expected codec_error");
    } catch (const codec_error& e) {
      REQUIRE(e.fault() == codec_fault::bad_magic);
    }
  }

  SECTION("truncation") {
    for (std::size_t keep : {std::size_t{2}, std::size_t{10}, good.size() - 1}) {
      std::vector<std::uint8_t> bad(good.begin(), good.begin() + static_cast<std::ptrdiff_t>(keep));
      try {
        decode_frame(bad);
        FAIL("expected codec_error");
      } catch (const codec_error& e) {
        REQUIRE(e.fault() == codec_fault::truncated);
      }
    }
  }

  SECTION("oversized frame is a length fault") {
    auto bad = good;
    bad.push_back(0);
    try {
      decode_frame(bad);
      FAIL("expected codec_error");
    } catch (const codec_error& e) {
      REQUIRE(e.fault() == codec_fault::truncated);
    }
  }

  SECTION("bit width out of range") {
    auto bad = good;
    bad[4] = 17;
    refresh_crc(bad);
    try {
      decode_frame(bad);
      FAIL("expected codec_error");
    } catch (const codec_error& e) {
      REQUIRE(e.fault() == codec_fault::bad_bit_width);
    }
  }

  SECTION("vmin greater than vmax") {
    auto bad = good;
    // swap the vmin and vmax fields (offsets 13 and 21)
    for (int i = 0; i < 8; ++i) std::swap(bad[13 + i], bad[21 + i]);
    refresh_crc(bad);
    try {
      decode_frame(bad);
      FAIL("expected codec_error");
    } catch (const codec_error& e) {
      REQUIRE(e.fault() == codec_fault::bad_range);
    }
  }

  SECTION("nonzero padding bits are an index overflow") {
    // 4 indices x 3 bits = 12 bits, so the body's top 4 bits are padding.
    auto bad = good;
    const std::size_t body_start = 29;
    bad[body_start + 1] |= 0x80;
    refresh_crc(bad);
    try {
      decode_frame(bad);
      FAIL("expected codec_error");
    } catch (const codec_error& e) {
      REQUIRE(e.fault() == codec_fault::index_overflow);
    }
  }

  SECTION("corruption without a checksum update") {
    auto bad = good;
    bad[15] ^= 0x40;
    try {
      decode_frame(bad);
      FAIL("expected codec_error");
    } catch (const codec_error& e) {
      REQUIRE(e.fault() == codec_fault::bad_crc);
    }
  }
}

TEST_CASE("encoder rejects payloads that violate the frame invariants") {
  quantized_payload p;
  p.bit_width = 17;
  p.count = 1;
  REQUIRE_THROWS_AS(encode_frame(p), std::invalid_argument);

  p.bit_width = 0;
  p.vmin = 0.0;
  p.vmax = 1.0;  // degenerate frames carry a single value
  REQUIRE_THROWS_AS(encode_frame(p), std::invalid_argument);

  p.vmax = 0.0;
  p.indices = {1};
  REQUIRE_THROWS_AS(encode_frame(p), std::invalid_argument);

  p.bit_width = 2;
  p.indices = {1, 2};  // count says 1
  REQUIRE_THROWS_AS(encode_frame(p), dimension_error);
}
