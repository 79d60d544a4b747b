#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nnstego/container.hpp"

namespace nnstego {

struct ParamStats {
  std::size_t count = 0;
  std::size_t negatives = 0;
  std::size_t positives = 0;
  std::size_t zeros = 0;
  float min = 0.0f;
  float max = 0.0f;
  double fraction_below_1e4 = 0.0;  // |v| < 1e-4
  double fraction_below_1e3 = 0.0;  // |v| < 1e-3
  std::array<std::size_t, 256> leading_byte_histogram{};
};

ParamStats compute_stats(std::span<const std::uint32_t> words);
ParamStats stats(const TensorModel& model, std::string_view tensor_name);

/// Share of words whose leading big-endian byte is one of the four pins.
double pinned_fraction(std::span<const std::uint32_t> words);

/// Shannon entropy (bits per byte) of the three trailing bytes, pooled.
double trailing_byte_entropy(std::span<const std::uint32_t> words);

// Clean He-initialized and trained weights sit near 0.10-0.16 pinned (the
// normal mass inside the two bands); a layer with a tenth of its neurons
// substituted is above 0.19.
inline constexpr double kDefaultDetectThreshold = 0.175;
inline constexpr std::size_t kDefaultDetectWindow = 4096;

struct DetectOptions {
  double threshold = kDefaultDetectThreshold;
  std::size_t window = kDefaultDetectWindow;
};

struct TensorDetection {
  std::string name;
  std::size_t count = 0;
  double pinned_fraction = 0.0;
  double trailing_entropy_bits = 0.0;
  bool in_window = false;  // count >= window
  bool flagged = false;
};

struct DetectionReport {
  std::vector<TensorDetection> tensors;
  double threshold = 0.0;
  std::size_t window = 0;
  bool flagged = false;

  /// Largest pinned fraction among tensors inside the window, 0 if none.
  double max_pinned_fraction() const;
};

DetectionReport detect(const TensorModel& model, const DetectOptions& options = {});

/// Replaces the low `bits` mantissa bits of every finite parameter with
/// seeded pseudo-random bits. Sign and exponent are never touched.
TensorModel sanitize(const TensorModel& model, int bits, std::uint64_t seed);

}  // namespace nnstego
