#include "nnstego/stego.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <random>

#include "nnstego/analysis.hpp"
#include "nnstego/error.hpp"

namespace nnstego {
namespace {

TensorModel layer_model(std::size_t m, std::size_t n, std::uint64_t seed, float stddev = 0.05f) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> gauss(0.0f, stddev);
  std::vector<float> w(m * n), b(m);
  for (auto& x : w) x = gauss(rng);
  for (auto& x : b) x = gauss(rng);
  TensorModel model;
  model.insert("fc.weight", Tensor::from_floats({m, n}, w));
  model.insert("fc.bias", Tensor::from_floats({m}, b));
  model.insert("head.weight", Tensor::from_floats({1, 3}, std::vector<float>{1, 2, 3}));
  return model;
}

Bytes random_bytes(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Bytes out(n);
  for (auto& b : out) b = static_cast<std::uint8_t>(rng());
  return out;
}

template <typename F>
Errc error_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return Errc::kIo;
}

TEST(CapacityTest, PerNeuronFigures) {
  TensorModel m;
  m.insert("fc0.weight", Tensor({16, 6400}, std::vector<std::uint32_t>(16 * 6400)));
  m.insert("fc0.bias", Tensor({16}, std::vector<std::uint32_t>(16)));
  m.insert("fc1.weight", Tensor({2285, 4096}, std::vector<std::uint32_t>(2285 * 4096)));
  m.insert("fc1.bias", Tensor({2285}, std::vector<std::uint32_t>(2285)));

  const auto fc0 = capacity(m, "fc0");
  EXPECT_EQ(fc0.per_neuron_bytes, 19200u);
  EXPECT_EQ(fc0.per_neuron_bytes / 1024.0, 18.75);

  const auto fc1 = capacity(m, "fc1");
  EXPECT_EQ(fc1.per_neuron_bytes, 12288u);
  EXPECT_EQ(fc1.per_neuron_bytes / 1024.0, 12.0);
  EXPECT_EQ(fc1.neurons, 2285u);
  EXPECT_EQ(fc1.payload_capacity_bytes, 2285u * 12288u);
  EXPECT_NEAR(fc1.payload_capacity_bytes / (1024.0 * 1024.0), 26.8, 0.05);
  EXPECT_EQ(fc1.header_neurons, 15u);
  EXPECT_EQ(fc1.neurons_required(12288), 1u);
  EXPECT_EQ(fc1.neurons_required(12289), 2u);
  EXPECT_EQ(error_of([&] { capacity(m, "nope"); }), Errc::kMissingTensor);
}

TEST(EmbedTest, ShortPayloadIsPaddedIntoTwoSlots) {
  const TensorModel model = layer_model(15, 3, 1);
  const Bytes payload = {0xDE, 0xAD, 0xBE, 0xEF};
  const TensorModel out = embed_fast_substitution(model, "fc", payload);
  const auto before = model.at("fc.weight").words();
  const auto after = out.at("fc.weight").words();
  EXPECT_EQ(after[0] & 0x00FFFFFFu, 0xDEADBEu);
  EXPECT_EQ(after[1] & 0x00FFFFFFu, 0xEF0000u);
  EXPECT_EQ(after[0] >> 24, std::bit_cast<float>(before[0]) < 0 ? 0xBCu : 0x3Cu);
  EXPECT_EQ(after[1] >> 24, std::bit_cast<float>(before[1]) < 0 ? 0xBCu : 0x3Cu);
  EXPECT_TRUE(std::equal(before.begin() + 2, before.end(), after.begin() + 2));
  EXPECT_EQ(extract_fast_substitution(out, "fc"), payload);
}

TEST(EmbedTest, OneFullNeuronAtFanIn6400) {
  const TensorModel model = layer_model(15, 6400, 2);
  const Bytes payload = random_bytes(19200, 3);
  const TensorModel out = embed_fast_substitution(model, "fc", payload);
  const auto before = model.at("fc.weight").words();
  const auto after = out.at("fc.weight").words();
  for (std::size_t j = 0; j < 6400; ++j) {
    ASSERT_TRUE(is_pin_byte(static_cast<std::uint8_t>(after[j] >> 24)));
  }
  EXPECT_TRUE(std::equal(before.begin() + 6400, before.end(), after.begin() + 6400));
  EXPECT_EQ(extract_fast_substitution(out, "fc"), payload);
}

TEST(EmbedTest, Preconditions) {
  const TensorModel model = layer_model(15, 4, 4);
  EXPECT_EQ(error_of([&] { embed_fast_substitution(model, "fc", random_bytes(3 * 15 * 4 + 1, 1)); }),
            Errc::kPayloadTooLarge);
  EXPECT_NO_THROW(embed_fast_substitution(model, "fc", random_bytes(3 * 15 * 4, 1)));
  EXPECT_EQ(error_of([&] { embed_fast_substitution(model, "fc", Bytes{}); }), Errc::kEmptyPayload);
  const TensorModel small = layer_model(14, 4, 4);
  EXPECT_EQ(error_of([&] { embed_fast_substitution(small, "fc", Bytes{1}); }),
            Errc::kLayerTooSmall);
}

TEST(EmbedTest, SignRules) {
  TensorModel model;
  model.insert("fc.weight", Tensor::from_floats({15, 4}, std::vector<float>(60, -0.5f)));
  std::vector<float> bias(15, 0.0f);
  bias[0] = -0.0f;
  bias[1] = -3.0f;
  model.insert("fc.bias", Tensor::from_floats({15}, bias));
  const Bytes payload = random_bytes(12, 1);

  const auto preserved = embed_fast_substitution(model, "fc", payload);
  EXPECT_EQ(preserved.at("fc.weight").words()[0] >> 24, 0xBCu);
  EXPECT_EQ(preserved.at("fc.bias").words()[0] >> 24, 0x3Cu);  // -0.0 counts as positive
  EXPECT_EQ(preserved.at("fc.bias").words()[1] >> 24, 0xBCu);

  const auto positive = embed_fast_substitution(model, "fc", payload,
                                                {Band::kSmall, SignRule::kAlwaysPositive});
  EXPECT_EQ(positive.at("fc.weight").words()[0] >> 24, 0x38u);
  EXPECT_EQ(positive.at("fc.bias").words()[1] >> 24, 0x38u);

  const auto small = embed_fast_substitution(model, "fc", payload, {Band::kSmall, {}});
  EXPECT_EQ(small.at("fc.weight").words()[3] >> 24, 0xB8u);
  EXPECT_EQ(extract_fast_substitution(small, "fc"), payload);
}

TEST(EmbedTest, HeaderLayoutInBiases) {
  const TensorModel model = layer_model(20, 8, 5);
  const Bytes payload = random_bytes(100, 6);
  const auto out = embed_fast_substitution(model, "fc", payload);
  const auto bias = out.at("fc.bias").words();
  EXPECT_EQ(bias[0] & 0xFFFFFFu, 0x454D01u);
  // length 100 as 8 big-endian bytes over biases 1..3, then a zero byte
  EXPECT_EQ(bias[1] & 0xFFFFFFu, 0u);
  EXPECT_EQ(bias[2] & 0xFFFFFFu, 0u);
  EXPECT_EQ(bias[3] & 0xFFFFFFu, 0x006400u);
  const Digest d = sha256(payload);
  EXPECT_EQ(bias[4] & 0xFFFFFFu,
            (std::uint32_t{d[0]} << 16) | (std::uint32_t{d[1]} << 8) | d[2]);
  EXPECT_EQ(bias[14] & 0xFFu, 0u);
  const auto before = model.at("fc.bias").words();
  EXPECT_TRUE(std::equal(before.begin() + 15, before.end(), bias.begin() + 15));
}

TEST(StegoProperty, RoundTripAcrossSizesAndParams) {
  const TensorModel model = layer_model(17, 23, 7);
  const std::size_t cap = 3 * 17 * 23;
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t len = 1 + rng() % cap;
    const Bytes payload = random_bytes(len, rng());
    const EncodingParams params{trial % 2 ? Band::kSmall : Band::kLarge,
                                trial % 3 ? SignRule::kPreserveOriginal
                                          : SignRule::kAlwaysPositive};
    const auto out = embed_fast_substitution(model, "fc", payload, params);
    ASSERT_EQ(extract_fast_substitution(out, "fc"), payload) << "len " << len;
  }
}

TEST(StegoProperty, StructurePreservedOutsideTargetSlots) {
  const TensorModel model = layer_model(30, 50, 9);
  const Bytes payload = random_bytes(1000, 10);
  const auto out = embed_fast_substitution(model, "fc", payload);
  const Bytes a = serialize(model);
  const Bytes b = serialize(out);
  ASSERT_EQ(a.size(), b.size());
  // Only the first ceil(1000/3) weights and 15 biases may differ.
  const auto specs = model.specs();
  std::vector<bool> allowed(a.size(), false);
  const std::size_t data_start = a.size() - 4 * (30 * 50 + 30 + 3);
  for (const auto& s : specs) {
    std::size_t slots = 0;
    if (s.name == "fc.weight") slots = (1000 + 2) / 3;
    if (s.name == "fc.bias") slots = 15;
    for (std::size_t i = 0; i < 4 * slots; ++i) allowed[data_start + s.data_offsets.first + i] = true;
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!allowed[i]) ASSERT_EQ(a[i], b[i]) << "byte " << i;
  }
  EXPECT_EQ(out.specs().size(), specs.size());
}

TEST(StegoProperty, WrittenWeightsStayInBandAndFinite) {
  const TensorModel model = layer_model(16, 64, 11);
  const Bytes payload = random_bytes(3 * 16 * 64, 12);
  for (Band band : {Band::kLarge, Band::kSmall}) {
    const auto out = embed_fast_substitution(model, "fc", payload, {band, {}});
    for (const auto& [name, t] : out.tensors()) {
      for (float v : t.to_floats()) ASSERT_TRUE(std::isfinite(v));
    }
    for (std::uint32_t w : out.at("fc.weight").words()) {
      const auto pin = to_pin(static_cast<std::uint8_t>(w >> 24));
      ASSERT_TRUE(pin.has_value());
      ASSERT_TRUE(pinned_interval(*pin).contains(std::bit_cast<float>(w)));
    }
  }
}

TEST(StegoProperty, Deterministic) {
  const TensorModel model = layer_model(16, 10, 13);
  const Bytes payload = random_bytes(200, 14);
  EXPECT_EQ(serialize(embed_fast_substitution(model, "fc", payload)),
            serialize(embed_fast_substitution(model, "fc", payload)));
}

TEST(StegoProperty, ExtractionReadsOnlyTheNeededNeurons) {
  const TensorModel model = layer_model(20, 10, 15);
  const Bytes payload = random_bytes(65, 16);  // 22 triplets: neurons 0..2
  auto out = embed_fast_substitution(model, "fc", payload);
  Tensor w = out.at("fc.weight");
  auto words = w.mutable_words();
  std::fill(words.begin() + 30, words.end(), 0x7FC00000u);  // NaN everywhere after neuron 2
  out.replace_data("fc.weight", w);
  EXPECT_EQ(extract_fast_substitution(out, "fc"), payload);
}

TEST(ExtractTest, CleanModelHasNoHeader) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const TensorModel model = layer_model(16, 8, 100 + seed, 0.02f);
    EXPECT_EQ(error_of([&] { extract_fast_substitution(model, "fc"); }), Errc::kNoStegoHeader);
  }
}

TEST(ExtractTest, CorruptionIsDetected) {
  const TensorModel model = layer_model(16, 8, 17);
  const Bytes payload = random_bytes(90, 18);
  const auto good = embed_fast_substitution(model, "fc", payload);

  auto flip = [&](const char* tensor, std::size_t i, std::uint32_t mask) {
    TensorModel m = good;
    Tensor t = m.at(tensor);
    t.mutable_words()[i] ^= mask;
    m.replace_data(tensor, t);
    return m;
  };
  EXPECT_EQ(error_of([&] { extract_fast_substitution(flip("fc.weight", 5, 1), "fc"); }),
            Errc::kDigestMismatch);
  EXPECT_EQ(error_of([&] { extract_fast_substitution(flip("fc.bias", 0, 0x000100), "fc"); }),
            Errc::kNoStegoHeader);
  EXPECT_EQ(error_of([&] { extract_fast_substitution(flip("fc.bias", 0, 0x000003), "fc"); }),
            Errc::kUnsupportedVersion);
  EXPECT_EQ(error_of([&] { extract_fast_substitution(flip("fc.bias", 3, 0x000001), "fc"); }),
            Errc::kDigestMismatch);
  EXPECT_EQ(error_of([&] { extract_fast_substitution(flip("fc.bias", 1, 0x010000), "fc"); }),
            Errc::kDigestMismatch);
  EXPECT_EQ(error_of([&] { extract_fast_substitution(sanitize(good, 8, 1), "fc"); }),
            Errc::kDigestMismatch);
}

TEST(HeaderTest, PackUnpackRoundTrip) {
  const Bytes payload = random_bytes(77, 19);
  const StegoHeader h = StegoHeader::for_payload(payload);
  const auto packed = h.pack();
  const StegoHeader back = StegoHeader::unpack(packed);
  EXPECT_EQ(back.payload_length, 77u);
  EXPECT_EQ(back.digest, sha256(payload));
  EXPECT_EQ(back.version, kStegoVersion);
}

// --- LSB baseline ---------------------------------------------------------

TEST(LsbTest, RoundTripForSeveralWidths) {
  const TensorModel model = layer_model(16, 40, 20);
  for (int k : {1, 2, 4, 7, 8, 13, 23}) {
    const std::size_t cap = lsb_capacity_bytes(model, "fc", k);
    for (std::size_t len : {std::size_t{1}, std::size_t{3}, cap / 2, cap}) {
      const Bytes payload = random_bytes(len, 21 + k);
      const auto out = embed_lsb(model, "fc", payload, k);
      ASSERT_EQ(extract_lsb(out, "fc", k), payload) << "k=" << k << " len=" << len;
    }
    EXPECT_EQ(error_of([&] { embed_lsb(model, "fc", random_bytes(cap + 1, 1), k); }),
              Errc::kPayloadTooLarge);
  }
}

TEST(LsbTest, CapacityPerNeuronAtEightBits) {
  TensorModel a, b;
  a.insert("fc.weight", Tensor({15, 4096}, std::vector<std::uint32_t>(15 * 4096)));
  a.insert("fc.bias", Tensor({15}, std::vector<std::uint32_t>(15)));
  b.insert("fc.weight", Tensor({16, 4096}, std::vector<std::uint32_t>(16 * 4096)));
  b.insert("fc.bias", Tensor({16}, std::vector<std::uint32_t>(16)));
  EXPECT_EQ(lsb_capacity_bytes(b, "fc", 8) - lsb_capacity_bytes(a, "fc", 8), 4097u);
  // 45 header bytes at k=8 take 45 parameters.
  EXPECT_EQ(lsb_capacity_bytes(a, "fc", 8), 15u * 4097u - 45u);
}

TEST(LsbTest, SignAndExponentUntouched) {
  const TensorModel model = layer_model(16, 40, 22);
  const std::size_t cap = lsb_capacity_bytes(model, "fc", 8);
  const auto out = embed_lsb(model, "fc", random_bytes(cap, 23), 8);
  const auto a = model.at("fc.weight").words();
  const auto b = out.at("fc.weight").words();
  for (std::size_t i = 0; i < a.size(); ++i) ASSERT_EQ(a[i] & ~0xFFu, b[i] & ~0xFFu);
  EXPECT_EQ(pinned_fraction(a), pinned_fraction(b));
}

TEST(LsbTest, WrongWidthIsRejected) {
  const TensorModel model = layer_model(16, 64, 24);
  const Bytes payload = random_bytes(64, 25);
  for (int k = 1; k <= 23; ++k) {
    const auto out = embed_lsb(model, "fc", payload, k);
    for (int j = 1; j <= 23; ++j) {
      if (j == k) continue;
      const Errc e = error_of([&] { extract_lsb(out, "fc", j); });
      ASSERT_TRUE(e == Errc::kNoStegoHeader || e == Errc::kDigestMismatch)
          << "embedded k=" << k << " extracted j=" << j << ": " << to_string(e);
    }
  }
}

TEST(LsbTest, CleanModelHasNoHeader) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const TensorModel model = layer_model(16, 40, 200 + seed);
    for (int k : {1, 4, 8}) {
      EXPECT_EQ(error_of([&] { extract_lsb(model, "fc", k); }), Errc::kNoStegoHeader);
    }
  }
  EXPECT_EQ(error_of([&] { embed_lsb(layer_model(16, 4, 1), "fc", Bytes{1}, 0); }),
            Errc::kInvalidArgument);
}

// Replacing the low k bits moves a normal value by at most (2^k - 1) ulps,
// i.e. (2^k - 1) * 2^(e - 150). Checked by brute force over every low-bit
// pattern for a set of exponents and base mantissas.
TEST(LsbTest, PerturbationBoundIsTight) {
  for (int k : {1, 4, 8, 12}) {
    for (std::uint32_t e : {100u, 120u, 127u, 133u}) {
      for (std::uint32_t base : {0x000000u, 0x2AAAAAu, 0x7FFFFFu}) {
        const std::uint32_t word = (e << 23) | base;
        const double original = std::bit_cast<float>(word);
        double worst = 0.0;
        for (std::uint32_t low = 0; low < (1u << k); ++low) {
          const std::uint32_t changed = (word & ~((1u << k) - 1)) | low;
          worst = std::max(worst, std::fabs(std::bit_cast<float>(changed) - original));
        }
        const double ulp = std::ldexp(1.0, static_cast<int>(e) - 150);
        ASSERT_LE(worst, ((1u << k) - 1) * ulp);
        ASSERT_LT(worst, std::ldexp(1.0, static_cast<int>(e) - 127));
      }
    }
  }
  // k = 23 analytic bound: span of the whole mantissa.
  const std::uint32_t e = 120;
  const double lo = std::bit_cast<float>(e << 23);
  const double hi = std::bit_cast<float>((e << 23) | 0x7FFFFFu);
  EXPECT_DOUBLE_EQ(hi - lo, std::ldexp(1.0, -7) * (std::ldexp(1.0, 23) - 1) / std::ldexp(1.0, 23));
}

}  // namespace
}  // namespace nnstego
