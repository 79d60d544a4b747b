#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>

#include "nnstego/container.hpp"
#include "nnstego/digest.hpp"
#include "nnstego/float_codec.hpp"

namespace nnstego {

enum class Band { kLarge, kSmall };
enum class SignRule { kPreserveOriginal, kAlwaysPositive };

struct EncodingParams {
  Band band = Band::kLarge;
  SignRule sign_rule = SignRule::kPreserveOriginal;
};

/// Pin for a slot whose current word is `original`. Zero (either sign)
/// counts as positive.
PinByte choose_pin(const EncodingParams& params, Float32Bits original);

inline constexpr std::array<std::uint8_t, 2> kStegoMagic = {0x45, 0x4D};
inline constexpr std::uint8_t kStegoVersion = 0x01;
inline constexpr std::size_t kHeaderNeurons = 15;
inline constexpr std::size_t kHeaderBytes = 3 * kHeaderNeurons;

/// Self-describing record stored ahead of the payload.
///
/// Packed as 45 bytes, three per header bias:
///   [0..1]   magic 'E' 'M'
///   [2]      version
///   [3..10]  payload length, big-endian
///   [11]     reserved, zero
///   [12..43] SHA-256 of the payload
///   [44]     pad, zero
struct StegoHeader {
  std::uint8_t version = kStegoVersion;
  std::uint64_t payload_length = 0;
  Digest digest{};

  static StegoHeader for_payload(std::span<const std::uint8_t> payload);

  std::array<std::uint8_t, kHeaderBytes> pack() const;
  /// Throws kNoStegoHeader on a magic mismatch, kDigestMismatch when the
  /// zero bytes are damaged, kUnsupportedVersion for a foreign version.
  static StegoHeader unpack(std::span<const std::uint8_t, kHeaderBytes> bytes);
};

struct CapacityReport {
  std::string layer;
  std::size_t neurons = 0;
  std::size_t fan_in = 0;
  std::size_t payload_capacity_bytes = 0;
  std::size_t per_neuron_bytes = 0;
  std::size_t header_neurons = kHeaderNeurons;

  std::size_t neurons_required(std::size_t payload_bytes) const {
    return per_neuron_bytes == 0
               ? 0
               : (payload_bytes + per_neuron_bytes - 1) / per_neuron_bytes;
  }
};

CapacityReport capacity(const TensorModel& model, std::string_view layer);

/// Writes the payload three bytes per weight, neuron-major from neuron 0, and
/// the header into biases 0..14. Every other byte of the model is untouched.
TensorModel embed_fast_substitution(const TensorModel& model, std::string_view layer,
                                    std::span<const std::uint8_t> payload,
                                    const EncodingParams& params = {});

Bytes extract_fast_substitution(const TensorModel& model, std::string_view layer);

/// Payload bytes that fit when `bits` low mantissa bits of every parameter
/// carry data and the header takes the leading parameters.
std::size_t lsb_capacity_bytes(const TensorModel& model, std::string_view layer, int bits);

TensorModel embed_lsb(const TensorModel& model, std::string_view layer,
                      std::span<const std::uint8_t> payload, int bits);

Bytes extract_lsb(const TensorModel& model, std::string_view layer, int bits);

}  // namespace nnstego
