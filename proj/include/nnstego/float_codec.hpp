#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <optional>

namespace nnstego {

/// A 32-bit IEEE-754 word viewed as its sign / biased exponent / fraction
/// fields. Holds the logical word value, never the on-disk byte order.
struct Float32Bits {
  std::uint32_t word = 0;

  static constexpr Float32Bits from_float(float v) {
    return {std::bit_cast<std::uint32_t>(v)};
  }
  static constexpr Float32Bits from_fields(std::uint32_t sign,
                                           std::uint32_t exponent,
                                           std::uint32_t mantissa) {
    return {((sign & 1u) << 31) | ((exponent & 0xFFu) << 23) |
            (mantissa & 0x7FFFFFu)};
  }

  constexpr float value() const { return std::bit_cast<float>(word); }
  constexpr std::uint32_t sign() const { return word >> 31; }
  constexpr std::uint32_t exponent() const { return (word >> 23) & 0xFFu; }
  constexpr std::uint32_t mantissa() const { return word & 0x7FFFFFu; }
  /// First byte of the big-endian representation.
  constexpr std::uint8_t leading_byte() const {
    return static_cast<std::uint8_t>(word >> 24);
  }

  constexpr bool operator==(const Float32Bits&) const = default;
};

/// Leading big-endian byte that fixes sign plus the upper seven exponent
/// bits, leaving the low 24 bits free for payload.
enum class PinByte : std::uint8_t {
  kLargePositive = 0x3C,  // biased exponent 120..121, |v| in [2^-7, 2^-5)
  kLargeNegative = 0xBC,
  kSmallPositive = 0x38,  // biased exponent 112..113, |v| in [2^-15, 2^-13)
  kSmallNegative = 0xB8,
};

inline constexpr std::array<PinByte, 4> kAllPins = {
    PinByte::kLargePositive, PinByte::kLargeNegative, PinByte::kSmallPositive,
    PinByte::kSmallNegative};

constexpr bool is_pin_byte(std::uint8_t b) {
  return b == 0x3C || b == 0xBC || b == 0x38 || b == 0xB8;
}

constexpr std::optional<PinByte> to_pin(std::uint8_t b) {
  if (!is_pin_byte(b)) return std::nullopt;
  return static_cast<PinByte>(b);
}

using Triplet = std::array<std::uint8_t, 3>;

constexpr Float32Bits encode_triplet(const Triplet& payload, PinByte pin) {
  return {(std::uint32_t{static_cast<std::uint8_t>(pin)} << 24) |
          (std::uint32_t{payload[0]} << 16) | (std::uint32_t{payload[1]} << 8) |
          std::uint32_t{payload[2]}};
}

struct DecodedTriplet {
  Triplet payload;
  PinByte pin;

  constexpr bool operator==(const DecodedTriplet&) const = default;
};

constexpr std::optional<DecodedTriplet> try_decode_triplet(Float32Bits bits) {
  auto pin = to_pin(bits.leading_byte());
  if (!pin) return std::nullopt;
  return DecodedTriplet{{static_cast<std::uint8_t>(bits.word >> 16),
                         static_cast<std::uint8_t>(bits.word >> 8),
                         static_cast<std::uint8_t>(bits.word)},
                        *pin};
}

/// Throws Error(kNotPinned) when the leading byte is outside the pin set.
DecodedTriplet decode_triplet(Float32Bits bits);

/// Magnitude band reachable by one pin. Positive pins give [lo, hi),
/// negative pins give (lo, hi].
struct PinnedInterval {
  double lo;
  double hi;
  bool negative;

  bool contains(double v) const {
    return negative ? (v > lo && v <= hi) : (v >= lo && v < hi);
  }
};

PinnedInterval pinned_interval(PinByte pin);

}  // namespace nnstego
