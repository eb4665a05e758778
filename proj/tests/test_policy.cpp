// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "feddq/policy.hpp"

using namespace feddq;

namespace {

policy_config feddq_cfg(double resolution = 0.005, int bit_min = 1, int bit_max = 16) {
  policy_config cfg;
  cfg.kind = policy_kind::feddq;
  cfg.resolution = resolution;
  cfg.bit_min = bit_min;
  cfg.bit_max = bit_max;
  return cfg;
}

}  // namespace

TEST_CASE("range-driven bit selection worked examples") {
  // 0.16 / 0.005 = 32 = 2^5 exactly: five bits suffice
  REQUIRE(decide_bits_feddq(0.16, feddq_cfg()).bits == 5);
  // 0.17 / 0.005 = 34 > 32: six bits
  REQUIRE(decide_bits_feddq(0.17, feddq_cfg()).bits == 6);
  // barely above a power of two must round up
  REQUIRE(decide_bits_feddq(std::nextafter(0.16, 1.0), feddq_cfg()).bits == 6);

  // tiny ranges clamp to the floor
  REQUIRE(decide_bits_feddq(1e-9, feddq_cfg()).bits == 1);
  REQUIRE(decide_bits_feddq(1e-9, feddq_cfg(0.005, 2, 16)).bits == 2);
  // huge ranges clamp to the ceiling
  REQUIRE(decide_bits_feddq(1e9, feddq_cfg()).bits == 16);
  REQUIRE(decide_bits_feddq(1e300, feddq_cfg()).bits == 16);

  // zero range maps to the floor; the quantizer degenerates downstream
  const bit_decision zero = decide_bits_feddq(0.0, feddq_cfg());
  REQUIRE(zero.bits == 1);
  REQUIRE(zero.level == 1);
}

TEST_CASE("bit selection rounds exact powers of two down to the tight width") {
  // range = resolution * 2^k picks exactly k bits for k in the clamp window
  for (int k = 1; k <= 16; ++k) {
    const double range = std::ldexp(0.005, k);
    REQUIRE(decide_bits_feddq(range, feddq_cfg()).bits == k);
  }
  // one ulp above the threshold crosses to k + 1 bits
  for (int k = 2; k <= 15; ++k) {
    const double range = std::nextafter(std::ldexp(0.005, k), 1e308);
    REQUIRE(decide_bits_feddq(range, feddq_cfg()).bits == k + 1);
  }
}

TEST_CASE("decisions carry the realized level") {
  const bit_decision d = decide_bits_feddq(0.16, feddq_cfg());
  REQUIRE(d.level == 31);
  REQUIRE(d.range == 0.16);
  REQUIRE_FALSE(d.bypass);
}

TEST_CASE("bit selection rejects invalid ranges") {
  REQUIRE_THROWS_AS(decide_bits_feddq(-0.1, feddq_cfg()), std::invalid_argument);
  REQUIRE_THROWS_AS(decide_bits_feddq(std::nan(""), feddq_cfg()), std::invalid_argument);
  REQUIRE_THROWS_AS(decide_bits_feddq(INFINITY, feddq_cfg()), std::invalid_argument);
}

TEST_CASE("fixed policy always picks its configured width") {
  policy_config cfg;
  cfg.kind = policy_kind::fixed;
  cfg.fixed_bits = 8;
  const bit_decision d = decide_bits_fixed(cfg);
  REQUIRE(d.bits == 8);
  REQUIRE(d.level == 255);

  cfg.fixed_bits = 20;
  REQUIRE_THROWS_AS(cfg.validate(), config_error);
}

TEST_CASE("ascending policy grows the level as the loss falls") {
  policy_config cfg;
  cfg.kind = policy_kind::ascending;
  cfg.s0 = 1;

  policy_state state;
  state.have_initial_loss = true;
  state.initial_loss = 1.0;

  // f0 / f = 1 keeps s = s0 = 1, one bit
  REQUIRE(decide_bits_ascending(1.0, state, cfg).bits == 1);
  // f = f0 / 4: s = ceil(sqrt(4)) = 2, two bits
  REQUIRE(decide_bits_ascending(0.25, state, cfg).bits == 2);
  // f = f0 / 100: s = 10, four bits
  REQUIRE(decide_bits_ascending(0.01, state, cfg).bits == 4);

  int prev = 0;
  for (double f = 1.0; f > 1e-10; f *= 0.5) {
    const int bits = decide_bits_ascending(f, state, cfg).bits;
    REQUIRE(bits >= prev);
    prev = bits;
  }
  REQUIRE(prev == 16);  // eventually pinned at the ceiling

  REQUIRE_THROWS_AS(decide_bits_ascending(0.0, state, cfg), std::invalid_argument);
  REQUIRE_THROWS_AS(decide_bits_ascending(-1.0, state, cfg), std::invalid_argument);
  policy_state fresh;
  REQUIRE_THROWS_AS(decide_bits_ascending(1.0, fresh, cfg), std::invalid_argument);
}

TEST_CASE("ascending start level rounds up to whole bits") {
  policy_config cfg;
  cfg.kind = policy_kind::ascending;
  cfg.s0 = 5;  // needs ceil(log2(6)) = 3 bits
  policy_state state;
  state.have_initial_loss = true;
  state.initial_loss = 2.0;
  REQUIRE(decide_bits_ascending(2.0, state, cfg).bits == 3);
}

TEST_CASE("full-precision decision bypasses quantization at 64 bits per coordinate") {
  const bit_decision d = decide_bits_full_precision();
  REQUIRE(d.bypass);
  REQUIRE(d.bits == 64);
  REQUIRE(decision_paper_bits(51, d) == 64 * 51);
}

TEST_CASE("per-decision bit accounting covers the degenerate frame") {
  bit_decision d;
  d.bits = 4;
  d.level = 15;
  REQUIRE(decision_paper_bits(10, d) == 10 * 4 + 32);

  d.bits = 0;
  d.level = 0;
  REQUIRE(decision_paper_bits(10, d) == 32);
}

TEST_CASE("policy configuration validation") {
  policy_config cfg;
  cfg.kind = policy_kind::feddq;
  cfg.resolution = 0.0;
  REQUIRE_THROWS_AS(cfg.validate(), config_error);
  cfg.resolution = -1.0;
  REQUIRE_THROWS_AS(cfg.validate(), config_error);
  cfg.resolution = 0.005;
  cfg.bit_min = 0;
  REQUIRE_THROWS_AS(cfg.validate(), config_error);
  cfg.bit_min = 9;
  cfg.bit_max = 8;
  REQUIRE_THROWS_AS(cfg.validate(), config_error);
  cfg.bit_max = 17;
  REQUIRE_THROWS_AS(cfg.validate(), config_error);
  cfg.bit_min = 1;
  cfg.bit_max = 16;
  REQUIRE_NOTHROW(cfg.validate());

  cfg.kind = policy_kind::ascending;
  cfg.s0 = 0;
  REQUIRE_THROWS_AS(cfg.validate(), config_error);
}

TEST_CASE("policy decisions reject mismatched kinds") {
  policy_config cfg;
  cfg.kind = policy_kind::fixed;
  REQUIRE_THROWS_AS(decide_bits_feddq(0.1, cfg), std::invalid_argument);
  cfg.kind = policy_kind::feddq;
  REQUIRE_THROWS_AS(decide_bits_fixed(cfg), std::invalid_argument);
}
