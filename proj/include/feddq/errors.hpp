// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace feddq {

/// Parameter/data shape disagreement. Message names expected vs actual.
class dimension_error : public std::invalid_argument {
 public:
  dimension_error(std::size_t expected, std::size_t actual, const std::string& what_of)
      : std::invalid_argument("dimension mismatch in " + what_of + ": expected " +
                              std::to_string(expected) + ", got " + std::to_string(actual)),
        expected_(expected),
        actual_(actual) {}

  std::size_t expected() const noexcept { return expected_; }
  std::size_t actual() const noexcept { return actual_; }

 private:
  std::size_t expected_;
  std::size_t actual_;
};

enum class codec_fault {
  bad_magic,
  truncated,
  bad_bit_width,
  index_overflow,
  bad_range,
  bad_crc,
};

inline const char* to_string(codec_fault f) {
  switch (f) {
    case codec_fault::bad_magic: return "bad magic";
    case codec_fault::truncated: return "truncated frame";
    case codec_fault::bad_bit_width: return "bit width out of range";
    case codec_fault::index_overflow: return "index overflow";
    case codec_fault::bad_range: return "invalid value range";
    case codec_fault::bad_crc: return "checksum mismatch";
  }
  return "unknown codec fault";
}

class codec_error : public std::runtime_error {
 public:
  codec_error(codec_fault fault, const std::string& detail)
      : std::runtime_error(std::string(to_string(fault)) + ": " + detail), fault_(fault) {}

  codec_fault fault() const noexcept { return fault_; }

 private:
  codec_fault fault_;
};

/// Non-finite model state or loss during training. Names the client and round.
class divergence_error : public std::runtime_error {
 public:
  divergence_error(std::size_t client_id, std::size_t round, const std::string& detail)
      : std::runtime_error("divergence at round " + std::to_string(round) + ", client " +
                           std::to_string(client_id) + ": " + detail),
        client_id_(client_id),
        round_(round) {}

  std::size_t client_id() const noexcept { return client_id_; }
  std::size_t round() const noexcept { return round_; }

 private:
  std::size_t client_id_;
  std::size_t round_;
};

/// Invalid experiment configuration. Message names the offending field.
class config_error : public std::invalid_argument {
 public:
  config_error(const std::string& field, const std::string& detail)
      : std::invalid_argument("config field '" + field + "': " + detail), field_(field) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class io_error : public std::runtime_error {
 public:
  explicit io_error(const std::string& what) : std::runtime_error(what) {}
  io_error(const std::string& path, const std::string& detail)
      : std::runtime_error(path + ": " + detail) {}
};

}  // namespace feddq
