#include "nnstego/analysis.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <random>

#include "nnstego/error.hpp"
#include "nnstego/float_codec.hpp"

namespace nnstego {

ParamStats compute_stats(std::span<const std::uint32_t> words) {
  ParamStats s;
  s.count = words.size();
  float lo = std::numeric_limits<float>::infinity();
  float hi = -std::numeric_limits<float>::infinity();
  std::size_t below_1e4 = 0;
  std::size_t below_1e3 = 0;
  for (std::uint32_t w : words) {
    const Float32Bits bits{w};
    const float v = bits.value();
    ++s.leading_byte_histogram[bits.leading_byte()];
    if ((w & 0x7FFFFFFFu) == 0) {
      ++s.zeros;
    } else if (bits.sign()) {
      ++s.negatives;
    } else {
      ++s.positives;
    }
    if (std::isnan(v)) continue;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
    const float mag = std::fabs(v);
    if (mag < 1e-4f) ++below_1e4;
    if (mag < 1e-3f) ++below_1e3;
  }
  if (s.count > 0) {
    s.min = lo;
    s.max = hi;
    s.fraction_below_1e4 = static_cast<double>(below_1e4) / static_cast<double>(s.count);
    s.fraction_below_1e3 = static_cast<double>(below_1e3) / static_cast<double>(s.count);
  }
  return s;
}

ParamStats stats(const TensorModel& model, std::string_view tensor_name) {
  return compute_stats(model.at(tensor_name).words());
}

double pinned_fraction(std::span<const std::uint32_t> words) {
  if (words.empty()) return 0.0;
  const auto pinned = std::count_if(words.begin(), words.end(), [](std::uint32_t w) {
    return is_pin_byte(static_cast<std::uint8_t>(w >> 24));
  });
  return static_cast<double>(pinned) / static_cast<double>(words.size());
}

double trailing_byte_entropy(std::span<const std::uint32_t> words) {
  if (words.empty()) return 0.0;
  std::array<std::size_t, 256> hist{};
  for (std::uint32_t w : words) {
    ++hist[(w >> 16) & 0xFF];
    ++hist[(w >> 8) & 0xFF];
    ++hist[w & 0xFF];
  }
  const double total = 3.0 * static_cast<double>(words.size());
  double h = 0.0;
  for (std::size_t c : hist) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / total;
    h -= p * std::log2(p);
  }
  return h;
}

double DetectionReport::max_pinned_fraction() const {
  double best = 0.0;
  for (const auto& t : tensors) {
    if (t.in_window) best = std::max(best, t.pinned_fraction);
  }
  return best;
}

DetectionReport detect(const TensorModel& model, const DetectOptions& options) {
  if (!(options.threshold > 0.0 && options.threshold <= 1.0)) {
    throw Error(Errc::kInvalidArgument, "detect threshold must lie in (0, 1]");
  }
  DetectionReport report;
  report.threshold = options.threshold;
  report.window = options.window;
  for (const auto& [name, tensor] : model.tensors()) {
    TensorDetection t;
    t.name = name;
    t.count = tensor.numel();
    t.pinned_fraction = pinned_fraction(tensor.words());
    t.trailing_entropy_bits = trailing_byte_entropy(tensor.words());
    t.in_window = t.count >= options.window;
    t.flagged = t.in_window && t.pinned_fraction >= options.threshold;
    report.flagged = report.flagged || t.flagged;
    report.tensors.push_back(std::move(t));
  }
  return report;
}

TensorModel sanitize(const TensorModel& model, int bits, std::uint64_t seed) {
  if (bits < 1 || bits > 23) {
    throw Error(Errc::kInvalidArgument,
                "sanitize bits must be in 1..23, got " + std::to_string(bits));
  }
  const std::uint32_t mask = (1u << bits) - 1u;
  std::mt19937_64 rng(seed);
  TensorModel out = model;
  for (const auto& [name, tensor] : model.tensors()) {
    Tensor copy = tensor;
    for (std::uint32_t& w : copy.mutable_words()) {
      // Inf/NaN keep their bits; randomizing an Inf mantissa would make a NaN.
      if (Float32Bits{w}.exponent() == 0xFF) continue;
      w = (w & ~mask) | (static_cast<std::uint32_t>(rng()) & mask);
    }
    out.replace_data(name, std::move(copy));
  }
  return out;
}

}  // namespace nnstego
