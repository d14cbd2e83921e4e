#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

namespace lingsim {

enum class ErrorKind {
  parse,     // malformed input record or file
  invalid,   // argument violates a precondition
  shape,     // dimension / size mismatch
  mismatch,  // digest or model-id mismatch between chained artifacts
  format,    // binary container damaged (magic, version, checksum, truncation)
  io,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// 64-bit FNV-1a. Used for dataset content hashes, header checksums and file
// digests. Not a cryptographic hash.
class Fnv1a64 {
 public:
  static constexpr std::uint64_t kOffset = 0xcbf29ce484222325ULL;
  static constexpr std::uint64_t kPrime = 0x100000001b3ULL;

  void update(std::span<const std::byte> bytes) noexcept {
    for (auto b : bytes) {
      state_ ^= static_cast<std::uint8_t>(b);
      state_ *= kPrime;
    }
  }
  void update(std::string_view s) noexcept { update(std::as_bytes(std::span(s.data(), s.size()))); }
  void update_byte(std::uint8_t b) noexcept {
    state_ ^= b;
    state_ *= kPrime;
  }
  void update_u64(std::uint64_t v) noexcept {
    for (int i = 0; i < 8; ++i) update_byte(static_cast<std::uint8_t>(v >> (8 * i)));
  }

  std::uint64_t digest() const noexcept { return state_; }

 private:
  std::uint64_t state_ = kOffset;
};

inline std::uint64_t fnv1a64(std::span<const std::byte> bytes) noexcept {
  Fnv1a64 h;
  h.update(bytes);
  return h.digest();
}

// 16 lowercase hex characters.
std::string hex16(std::uint64_t v);
std::uint64_t parse_hex16(std::string_view s);

// Round half away from zero, the single rounding rule used throughout.
inline double round_half_away(double x) noexcept { return std::round(x); }

// Similarity code <-> real value.
inline constexpr std::int8_t kUndefinedCode = -128;
inline constexpr int kCodeScale = 127;

inline std::int8_t quantize_similarity(double cos) noexcept {
  double q = round_half_away(cos * kCodeScale);
  if (q > kCodeScale) q = kCodeScale;
  if (q < -kCodeScale) q = -kCodeScale;
  return static_cast<std::int8_t>(q);
}

inline double dequantize_similarity(std::int8_t code) noexcept {
  return static_cast<double>(code) / kCodeScale;
}

}  // namespace lingsim
