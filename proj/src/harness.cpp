#include "nnstego/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <iostream>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>

namespace nnstego {

namespace {

constexpr std::string_view kFormatKey = "nnstego.format";
constexpr std::string_view kFormatValue = "mlp-v1";
constexpr std::string_view kLayersKey = "nnstego.layers";

std::string float_text(float v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

float parse_float(const std::string& text, const std::string& what) {
  float v = 0.0f;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw Error(Errc::kMalformedHeader, "bad numeric metadata for " + what);
  }
  return v;
}

Tensor vector_tensor(const Vector<float>& v) {
  return Tensor::from_floats({static_cast<std::size_t>(v.size())},
                             std::span<const float>(v.data(), static_cast<std::size_t>(v.size())));
}

Vector<float> read_vector(const TensorModel& model, const std::string& name,
                          Eigen::Index expected) {
  const Tensor& t = model.at(name);
  if (t.rank() != 1 || static_cast<Eigen::Index>(t.numel()) != expected) {
    throw Error(Errc::kShapeMismatch, name + " must be a vector of length " +
                                          std::to_string(expected));
  }
  const auto values = t.to_floats();
  return Eigen::Map<const Vector<float>>(values.data(), expected);
}

std::vector<std::string> split_names(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

Mlp<float> make_mlp(const MlpSpec& spec) {
  if (spec.dims.size() < 2) {
    throw Error(Errc::kInvalidArgument, "an MLP needs at least input and output sizes");
  }
  std::mt19937_64 rng(spec.seed);
  Mlp<float> model;
  const std::size_t count = spec.dims.size() - 1;
  for (std::size_t l = 0; l < count; ++l) {
    const int in = spec.dims[l];
    const int out = spec.dims[l + 1];
    if (in < 1 || out < 1) throw Error(Errc::kInvalidArgument, "layer sizes must be positive");
    DenseLayer<float> layer;
    layer.name = "fc" + std::to_string(l);
    std::normal_distribution<float> gauss(0.0f, std::sqrt(2.0f / static_cast<float>(in)));
    layer.weights.resize(out, in);
    for (Eigen::Index i = 0; i < layer.weights.size(); ++i) layer.weights.data()[i] = gauss(rng);
    layer.bias = Vector<float>::Zero(out);
    const bool hidden = l + 1 < count;
    layer.activation = hidden ? Activation::kRelu : Activation::kIdentity;
    if (hidden && spec.batch_norm) layer.batch_norm = BatchNorm<float>::fresh(out);
    layer.frozen.assign(static_cast<std::size_t>(out), false);
    model.layers.push_back(std::move(layer));
  }
  return model;
}

TrainResult train(Mlp<float> model, const Dataset& data, const TrainConfig& config) {
  if (!(config.learning_rate > 0.0f) || config.batch_size < 1 || config.epochs < 0) {
    throw Error(Errc::kInvalidArgument, "invalid training configuration");
  }
  if (data.size() == 0) throw Error(Errc::kInvalidArgument, "training set is empty");
  if (data.features.cols() != model.input_dim()) {
    throw Error(Errc::kShapeMismatch, "dataset features do not match the model input");
  }

  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult result{std::move(model), {}};
  Matrix<float> batch;
  std::vector<int> labels;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t size = std::min(config.batch_size, order.size() - start);
      batch.resize(static_cast<Eigen::Index>(size), data.features.cols());
      labels.resize(size);
      for (std::size_t i = 0; i < size; ++i) {
        batch.row(static_cast<Eigen::Index>(i)) =
            data.features.row(static_cast<Eigen::Index>(order[start + i]));
        labels[i] = data.labels[order[start + i]];
      }
      const auto pass = forward_pass(result.model, batch, Mode::kTrain);
      const auto loss = softmax_cross_entropy<float>(pass.logits(), labels);
      if (!std::isfinite(loss.loss)) {
        throw Error(Errc::kNonFiniteLoss, "loss diverged in epoch " + std::to_string(epoch + 1));
      }
      const auto grads = backward(result.model, pass, loss.dlogits);
      apply_sgd(result.model, grads, config.learning_rate);
      update_running_stats(result.model, pass);
      loss_sum += static_cast<double>(loss.loss) * static_cast<double>(size);
      correct += loss.correct;
    }
    const double n = static_cast<double>(order.size());
    result.metrics.push_back({epoch + 1, loss_sum / n, static_cast<double>(correct) / n});
  }
  return result;
}

double evaluate(const Mlp<float>& model, const Dataset& data, std::size_t batch_size) {
  if (data.size() == 0) return 0.0;
  batch_size = std::max<std::size_t>(batch_size, 1);
  std::size_t correct = 0;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const auto size = static_cast<Eigen::Index>(std::min(batch_size, data.size() - start));
    const Matrix<float> batch =
        data.features.middleRows(static_cast<Eigen::Index>(start), size);
    const Matrix<float> logits = forward(model, batch, Mode::kEval);
    for (Eigen::Index i = 0; i < size; ++i) {
      Eigen::Index argmax = 0;
      logits.row(i).maxCoeff(&argmax);
      if (argmax == data.labels[start + static_cast<std::size_t>(i)]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

TensorModel to_container(const Mlp<float>& model) {
  TensorModel out;
  std::string names;
  for (const auto& layer : model.layers) {
    const auto m = static_cast<std::size_t>(layer.neurons());
    const auto n = static_cast<std::size_t>(layer.fan_in());
    out.insert(layer.name + ".weight",
               Tensor::from_floats({m, n}, std::span<const float>(layer.weights.data(), m * n)));
    out.insert(layer.name + ".bias", vector_tensor(layer.bias));
    out.set_metadata(layer.name + ".activation",
                     layer.activation == Activation::kRelu ? "relu" : "identity");
    if (layer.batch_norm) {
      const auto& bn = *layer.batch_norm;
      out.insert(layer.name + ".bn.weight", vector_tensor(bn.gamma));
      out.insert(layer.name + ".bn.bias", vector_tensor(bn.beta));
      out.insert(layer.name + ".bn.running_mean", vector_tensor(bn.running_mean));
      out.insert(layer.name + ".bn.running_var", vector_tensor(bn.running_var));
      out.set_metadata(layer.name + ".bn.epsilon", float_text(bn.epsilon));
      out.set_metadata(layer.name + ".bn.momentum", float_text(bn.momentum));
    }
    if (!names.empty()) names += ',';
    names += layer.name;
  }
  out.set_metadata(std::string(kFormatKey), std::string(kFormatValue));
  out.set_metadata(std::string(kLayersKey), names);
  return out;
}

Mlp<float> from_container(const TensorModel& model) {
  const auto& meta = model.metadata();
  auto format = meta.find(std::string(kFormatKey));
  auto layers = meta.find(std::string(kLayersKey));
  if (format == meta.end() || format->second != kFormatValue || layers == meta.end()) {
    throw Error(Errc::kMalformedHeader, "container does not describe an MLP");
  }
  Mlp<float> out;
  for (const auto& name : split_names(layers->second)) {
    const LayerView view = layer_view(model, name);
    DenseLayer<float> layer;
    layer.name = name;
    const auto m = static_cast<Eigen::Index>(view.neurons());
    const auto n = static_cast<Eigen::Index>(view.fan_in());
    const auto w = model.at(name + ".weight").to_floats();
    layer.weights = Eigen::Map<const Matrix<float>>(w.data(), m, n);
    layer.bias = read_vector(model, name + ".bias", m);
    auto act = meta.find(name + ".activation");
    layer.activation = (act != meta.end() && act->second == "identity") ? Activation::kIdentity
                                                                        : Activation::kRelu;
    if (model.contains(name + ".bn.weight")) {
      BatchNorm<float> bn;
      bn.gamma = read_vector(model, name + ".bn.weight", m);
      bn.beta = read_vector(model, name + ".bn.bias", m);
      bn.running_mean = read_vector(model, name + ".bn.running_mean", m);
      bn.running_var = read_vector(model, name + ".bn.running_var", m);
      if (auto it = meta.find(name + ".bn.epsilon"); it != meta.end()) {
        bn.epsilon = parse_float(it->second, name + ".bn.epsilon");
      }
      if (auto it = meta.find(name + ".bn.momentum"); it != meta.end()) {
        bn.momentum = parse_float(it->second, name + ".bn.momentum");
      }
      layer.batch_norm = std::move(bn);
    }
    layer.frozen.assign(static_cast<std::size_t>(m), false);
    if (!out.layers.empty() && out.layers.back().neurons() != n) {
      throw Error(Errc::kShapeMismatch, "layer " + name + " does not chain onto its predecessor");
    }
    out.layers.push_back(std::move(layer));
  }
  if (out.layers.empty()) throw Error(Errc::kMalformedHeader, "MLP has no layers");
  return out;
}

PayloadSource random_payload_source(std::uint64_t seed) {
  auto rng = std::make_shared<std::mt19937_64>(seed);
  return [rng](std::size_t bytes) {
    Bytes out(bytes);
    for (auto& b : out) b = static_cast<std::uint8_t>((*rng)() >> 56);
    return out;
  };
}

PayloadSource repeating_payload_source(Bytes sample) {
  if (sample.empty()) throw Error(Errc::kEmptyPayload, "payload sample is empty");
  return [sample = std::move(sample)](std::size_t bytes) {
    Bytes out(bytes);
    for (std::size_t i = 0; i < bytes; ++i) out[i] = sample[i % sample.size()];
    return out;
  };
}

AccuracyCurve sweep(const Mlp<float>& model, const DatasetSplit& data,
                    const PayloadSource& payload_source, const SweepOptions& options) {
  const double baseline = evaluate(model, data.test);
  const auto& target = model.layer(options.layer);
  const auto neurons_total = static_cast<std::size_t>(target.neurons());
  const auto fan_in = static_cast<std::size_t>(target.fan_in());
  const TensorModel clean = to_container(model);

  AccuracyCurve curve;
  for (double fraction : options.fractions) {
    if (!(fraction >= 0.0)) {
      throw Error(Errc::kInvalidArgument, "sweep fractions must be non-negative");
    }
    auto neurons = static_cast<std::size_t>(
        std::llround(fraction * static_cast<double>(neurons_total)));
    if (neurons > neurons_total) {
      std::cerr << "warning: " << neurons << " neurons requested for " << options.layer
                << ", clamping to " << neurons_total << "\n";
      neurons = neurons_total;
    }
    SweepPoint point;
    point.fraction = fraction;
    point.neurons = neurons;
    if (neurons == 0) {
      point.accuracy_before = baseline;
      if (options.retrain) point.accuracy_after = baseline;
      curve.push_back(point);
      continue;
    }

    const Bytes payload = payload_source(neurons * 3 * fan_in);
    const TensorModel embedded =
        embed_fast_substitution(clean, options.layer, payload, options.encoding);
    Mlp<float> stego = from_container(embedded);
    point.accuracy_before = evaluate(stego, data.test);

    TensorModel check = embedded;
    if (options.retrain) {
      auto& layer = stego.layer(options.layer);
      const std::size_t touched = std::max(neurons, kHeaderNeurons);
      for (std::size_t i = 0; i < touched && i < layer.frozen.size(); ++i) layer.frozen[i] = true;
      auto retrained = train(std::move(stego), data.train, options.retrain_config);
      point.accuracy_after = evaluate(retrained.model, data.test);
      check = to_container(retrained.model);
    }
    try {
      point.digest_ok = extract_fast_substitution(check, options.layer) == payload;
    } catch (const Error& e) {
      if (e.code() != Errc::kDigestMismatch && e.code() != Errc::kNoStegoHeader) throw;
      point.digest_ok = false;
    }
    curve.push_back(point);
  }
  return curve;
}

std::string sweep_csv(const AccuracyCurve& curve) {
  std::ostringstream out;
  out << "fraction,acc_before,acc_after,digest_ok\n";
  out.setf(std::ios::fixed);
  for (const auto& p : curve) {
    out.precision(4);
    out << p.fraction << ',';
    out.precision(6);
    out << p.accuracy_before << ',';
    if (p.accuracy_after) out << *p.accuracy_after;
    out << ',' << (p.digest_ok ? "true" : "false") << '\n';
  }
  return out.str();
}

}  // namespace nnstego
