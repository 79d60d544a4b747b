#include "nnstego/stego.hpp"

#include <algorithm>

#include "nnstego/error.hpp"

namespace nnstego {

namespace {

constexpr std::size_t kHeaderBits = 8 * kHeaderBytes;

std::size_t div_ceil(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

void check_lsb_bits(int bits) {
  if (bits < 1 || bits > 23) {
    throw Error(Errc::kInvalidArgument,
                "bits per parameter must be in 1..23, got " + std::to_string(bits));
  }
}

void verify(std::span<const std::uint8_t> payload, const StegoHeader& header) {
  if (sha256(payload) != header.digest) {
    throw Error(Errc::kDigestMismatch, "digest mismatch: extracted payload is corrupted");
  }
}

// Streams bits most-significant-first through the low `bits` of successive
// layer parameters.
class LsbCursor {
 public:
  LsbCursor(std::size_t first_parameter, int bits)
      : parameter_(first_parameter), bits_(bits) {}

  void write(LayerView& view, std::span<const std::uint8_t> bytes) {
    for (std::uint8_t byte : bytes) {
      for (int b = 7; b >= 0; --b) put(view, (byte >> b) & 1u);
    }
    flush(view);
  }

  void read(const LayerView& view, std::span<std::uint8_t> out) {
    for (auto& byte : out) {
      std::uint8_t v = 0;
      for (int b = 0; b < 8; ++b) v = static_cast<std::uint8_t>((v << 1) | get(view));
      byte = v;
    }
  }

 private:
  void put(LayerView& view, std::uint32_t bit) {
    const std::uint32_t shift = static_cast<std::uint32_t>(bits_ - 1 - used_);
    const std::uint32_t mask = 1u << shift;
    if (used_ == 0) pending_ = view.parameter(parameter_);
    pending_ = (pending_ & ~mask) | (bit << shift);
    if (++used_ == bits_) flush(view);
  }

  void flush(LayerView& view) {
    if (used_ == 0) return;
    view.set_parameter(parameter_, pending_);
    ++parameter_;
    used_ = 0;
  }

  std::uint32_t get(const LayerView& view) {
    const std::uint32_t word = view.parameter(parameter_);
    const std::uint32_t bit = (word >> (bits_ - 1 - used_)) & 1u;
    if (++used_ == bits_) {
      ++parameter_;
      used_ = 0;
    }
    return bit;
  }

  std::size_t parameter_;
  int bits_;
  int used_ = 0;
  std::uint32_t pending_ = 0;
};

std::size_t lsb_header_parameters(int bits) {
  return div_ceil(kHeaderBits, static_cast<std::size_t>(bits));
}

std::size_t lsb_capacity(const LayerView& view, int bits) {
  const std::size_t header_params = lsb_header_parameters(bits);
  if (view.parameter_count() <= header_params) return 0;
  return (view.parameter_count() - header_params) * static_cast<std::size_t>(bits) / 8;
}

}  // namespace

PinByte choose_pin(const EncodingParams& params, Float32Bits original) {
  const bool negative = params.sign_rule == SignRule::kPreserveOriginal &&
                        original.value() < 0.0f;
  if (params.band == Band::kLarge) {
    return negative ? PinByte::kLargeNegative : PinByte::kLargePositive;
  }
  return negative ? PinByte::kSmallNegative : PinByte::kSmallPositive;
}

StegoHeader StegoHeader::for_payload(std::span<const std::uint8_t> payload) {
  StegoHeader h;
  h.payload_length = payload.size();
  h.digest = sha256(payload);
  return h;
}

std::array<std::uint8_t, kHeaderBytes> StegoHeader::pack() const {
  std::array<std::uint8_t, kHeaderBytes> out{};
  out[0] = kStegoMagic[0];
  out[1] = kStegoMagic[1];
  out[2] = version;
  for (int i = 0; i < 8; ++i) {
    out[3 + i] = static_cast<std::uint8_t>(payload_length >> (8 * (7 - i)));
  }
  std::copy(digest.begin(), digest.end(), out.begin() + 12);
  return out;
}

StegoHeader StegoHeader::unpack(std::span<const std::uint8_t, kHeaderBytes> bytes) {
  if (bytes[0] != kStegoMagic[0] || bytes[1] != kStegoMagic[1]) {
    throw Error(Errc::kNoStegoHeader, "no stego header");
  }
  // The zero bytes sit in the lowest mantissa bits of their parameters, so
  // low-bit damage shows up here before the version byte is trusted.
  if (bytes[11] != 0 || bytes[44] != 0) {
    throw Error(Errc::kDigestMismatch, "digest mismatch: stego header is damaged");
  }
  StegoHeader h;
  h.version = bytes[2];
  if (h.version != kStegoVersion) {
    throw Error(Errc::kUnsupportedVersion,
                "unsupported stego header version " + std::to_string(h.version));
  }
  for (int i = 0; i < 8; ++i) h.payload_length = (h.payload_length << 8) | bytes[3 + i];
  std::copy(bytes.begin() + 12, bytes.begin() + 44, h.digest.begin());
  return h;
}

CapacityReport capacity(const TensorModel& model, std::string_view layer) {
  const LayerView view = layer_view(model, layer);
  CapacityReport r;
  r.layer = std::string(layer);
  r.neurons = view.neurons();
  r.fan_in = view.fan_in();
  r.per_neuron_bytes = 3 * view.fan_in();
  r.payload_capacity_bytes = r.per_neuron_bytes * view.neurons();
  return r;
}

TensorModel embed_fast_substitution(const TensorModel& model, std::string_view layer,
                                    std::span<const std::uint8_t> payload,
                                    const EncodingParams& params) {
  LayerView view = layer_view(model, layer);
  if (payload.empty()) throw Error(Errc::kEmptyPayload, "payload is empty");
  if (view.neurons() < kHeaderNeurons) {
    throw Error(Errc::kLayerTooSmall,
                "layer '" + view.name() + "' has " + std::to_string(view.neurons()) +
                    " neurons; the header needs " + std::to_string(kHeaderNeurons));
  }
  const std::size_t cap = 3 * view.neurons() * view.fan_in();
  if (payload.size() > cap) {
    throw Error(Errc::kPayloadTooLarge, "payload of " + std::to_string(payload.size()) +
                                            " bytes exceeds layer capacity of " +
                                            std::to_string(cap) + " bytes");
  }

  const std::size_t groups = div_ceil(payload.size(), 3);
  const std::size_t n = view.fan_in();
  for (std::size_t neuron = 0; neuron * n < groups; ++neuron) {
    auto row = view.weights(neuron);
    const std::size_t first = neuron * n;
    const std::size_t count = std::min(n, groups - first);
    for (std::size_t j = 0; j < count; ++j) {
      const std::size_t at = 3 * (first + j);
      Triplet t{};
      for (std::size_t b = 0; b < 3 && at + b < payload.size(); ++b) t[b] = payload[at + b];
      row[j] = encode_triplet(t, choose_pin(params, Float32Bits{row[j]})).word;
    }
  }

  const auto header = StegoHeader::for_payload(payload).pack();
  for (std::size_t i = 0; i < kHeaderNeurons; ++i) {
    const Triplet t{header[3 * i], header[3 * i + 1], header[3 * i + 2]};
    view.set_bias(i, encode_triplet(t, choose_pin(params, Float32Bits{view.bias(i)})).word);
  }

  TensorModel out = model;
  view.commit(out);
  return out;
}

Bytes extract_fast_substitution(const TensorModel& model, std::string_view layer) {
  const LayerView view = layer_view(model, layer);
  if (view.neurons() < kHeaderNeurons) throw Error(Errc::kNoStegoHeader, "no stego header");

  std::array<std::uint8_t, kHeaderBytes> raw{};
  for (std::size_t i = 0; i < kHeaderNeurons; ++i) {
    const Float32Bits bits{view.bias(i)};
    if (i == 0 && !is_pin_byte(bits.leading_byte())) {
      throw Error(Errc::kNoStegoHeader, "no stego header");
    }
    raw[3 * i] = static_cast<std::uint8_t>(bits.word >> 16);
    raw[3 * i + 1] = static_cast<std::uint8_t>(bits.word >> 8);
    raw[3 * i + 2] = static_cast<std::uint8_t>(bits.word);
  }
  const StegoHeader header = StegoHeader::unpack(raw);

  const std::size_t cap = 3 * view.neurons() * view.fan_in();
  if (header.payload_length == 0 || header.payload_length > cap) {
    throw Error(Errc::kDigestMismatch, "digest mismatch: recorded length " +
                                           std::to_string(header.payload_length) +
                                           " is impossible for this layer");
  }

  const std::size_t length = static_cast<std::size_t>(header.payload_length);
  const std::size_t groups = div_ceil(length, 3);
  const std::size_t n = view.fan_in();
  Bytes payload(3 * groups);
  for (std::size_t neuron = 0; neuron * n < groups; ++neuron) {
    auto row = view.weights(neuron);
    const std::size_t first = neuron * n;
    const std::size_t count = std::min(n, groups - first);
    for (std::size_t j = 0; j < count; ++j) {
      const std::uint32_t w = row[j];
      std::uint8_t* dst = payload.data() + 3 * (first + j);
      dst[0] = static_cast<std::uint8_t>(w >> 16);
      dst[1] = static_cast<std::uint8_t>(w >> 8);
      dst[2] = static_cast<std::uint8_t>(w);
    }
  }
  payload.resize(length);
  verify(payload, header);
  return payload;
}

std::size_t lsb_capacity_bytes(const TensorModel& model, std::string_view layer, int bits) {
  check_lsb_bits(bits);
  return lsb_capacity(layer_view(model, layer), bits);
}

TensorModel embed_lsb(const TensorModel& model, std::string_view layer,
                      std::span<const std::uint8_t> payload, int bits) {
  check_lsb_bits(bits);
  LayerView view = layer_view(model, layer);
  if (payload.empty()) throw Error(Errc::kEmptyPayload, "payload is empty");
  const std::size_t cap = lsb_capacity(view, bits);
  if (payload.size() > cap) {
    throw Error(Errc::kPayloadTooLarge, "payload of " + std::to_string(payload.size()) +
                                            " bytes exceeds LSB capacity of " +
                                            std::to_string(cap) + " bytes");
  }
  const auto header = StegoHeader::for_payload(payload).pack();
  LsbCursor(0, bits).write(view, header);
  LsbCursor(lsb_header_parameters(bits), bits).write(view, payload);

  TensorModel out = model;
  view.commit(out);
  return out;
}

Bytes extract_lsb(const TensorModel& model, std::string_view layer, int bits) {
  check_lsb_bits(bits);
  const LayerView view = layer_view(model, layer);
  if (view.parameter_count() < lsb_header_parameters(bits)) {
    throw Error(Errc::kNoStegoHeader, "no stego header");
  }
  std::array<std::uint8_t, kHeaderBytes> raw{};
  LsbCursor(0, bits).read(view, raw);
  const StegoHeader header = StegoHeader::unpack(raw);

  const std::size_t cap = lsb_capacity(view, bits);
  if (header.payload_length == 0 || header.payload_length > cap) {
    throw Error(Errc::kDigestMismatch, "digest mismatch: recorded length " +
                                           std::to_string(header.payload_length) +
                                           " is impossible for this layer");
  }
  Bytes payload(static_cast<std::size_t>(header.payload_length));
  LsbCursor(lsb_header_parameters(bits), bits).read(view, payload);
  verify(payload, header);
  return payload;
}

}  // namespace nnstego
