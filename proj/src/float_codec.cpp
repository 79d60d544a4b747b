#include "nnstego/float_codec.hpp"

#include <cmath>
#include <cstdio>

#include "nnstego/error.hpp"

namespace nnstego {

DecodedTriplet decode_triplet(Float32Bits bits) {
  if (auto decoded = try_decode_triplet(bits)) return *decoded;
  char msg[64];
  std::snprintf(msg, sizeof msg, "word 0x%08X is not pinned", bits.word);
  throw Error(Errc::kNotPinned, msg);
}

PinnedInterval pinned_interval(PinByte pin) {
  const auto byte = static_cast<std::uint8_t>(pin);
  const bool negative = (byte & 0x80u) != 0;
  // The pin byte holds the upper seven exponent bits; the eighth is payload.
  const int lowest_exponent = ((byte & 0x7F) << 1) - 127;
  const double lo = std::ldexp(1.0, lowest_exponent);
  const double hi = std::ldexp(1.0, lowest_exponent + 2);
  if (negative) return {-hi, -lo, true};
  return {lo, hi, false};
}

}  // namespace nnstego
