#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "nnstego/container.hpp"
#include "nnstego/dataset.hpp"
#include "nnstego/mlp.hpp"
#include "nnstego/stego.hpp"

namespace nnstego {

/// Bytes taken by a layer of m neurons with n inputs each: 4m(n+1).
constexpr std::uint64_t param_size(std::uint64_t neurons, std::uint64_t fan_in) {
  return 4 * neurons * (fan_in + 1);
}

struct MlpSpec {
  std::vector<int> dims = {64, 128, 64, 10};
  bool batch_norm = false;
  std::uint64_t seed = 1;
};

/// Hidden layers are named fc0, fc1, ... and use ReLU (plus BN when asked);
/// the last layer is linear. He-normal weights, zero biases.
Mlp<float> make_mlp(const MlpSpec& spec);

struct TrainConfig {
  float learning_rate = 0.05f;
  int epochs = 10;
  std::size_t batch_size = 64;
  std::uint64_t seed = 1;
};

struct EpochMetrics {
  int epoch = 0;
  double loss = 0.0;
  double train_accuracy = 0.0;
};

struct TrainResult {
  Mlp<float> model;
  std::vector<EpochMetrics> metrics;
};

/// Mini-batch SGD on softmax cross-entropy. Deterministic for a given seed.
/// Throws kNonFiniteLoss if the loss diverges.
TrainResult train(Mlp<float> model, const Dataset& data, const TrainConfig& config);

double evaluate(const Mlp<float>& model, const Dataset& data, std::size_t batch_size = 512);

TensorModel to_container(const Mlp<float>& model);
Mlp<float> from_container(const TensorModel& model);

struct SweepPoint {
  double fraction = 0.0;
  std::size_t neurons = 0;
  double accuracy_before = 0.0;
  std::optional<double> accuracy_after;
  bool digest_ok = true;
};

using AccuracyCurve = std::vector<SweepPoint>;

/// Supplies `bytes` payload bytes for one sweep point.
using PayloadSource = std::function<Bytes(std::size_t bytes)>;

PayloadSource random_payload_source(std::uint64_t seed);
/// Repeats `sample` until the request is filled.
PayloadSource repeating_payload_source(Bytes sample);

struct SweepOptions {
  std::string layer = "fc1";
  std::vector<double> fractions = {0.0, 0.25, 0.5, 0.75, 1.0};
  bool retrain = false;
  TrainConfig retrain_config{0.05f, 1, 64, 1};
  // Sign-preserving substitution keeps sign(W) of the layer, which alone
  // carries most of its function; the accuracy experiments write
  // sign-agnostic values instead.
  EncodingParams encoding{Band::kLarge, SignRule::kAlwaysPositive};
};

/// For each fraction: fill that prefix of the layer's neurons with payload,
/// evaluate; optionally freeze the touched neurons, retrain, evaluate again
/// and confirm the payload still extracts with a matching digest.
AccuracyCurve sweep(const Mlp<float>& model, const DatasetSplit& data,
                    const PayloadSource& payload_source, const SweepOptions& options);

std::string sweep_csv(const AccuracyCurve& curve);

}  // namespace nnstego
