#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nnstego/error.hpp"

namespace nnstego {

// Row-major so a weight matrix [m, n] has the same element order as the
// container tensor it is exported to.
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

enum class Activation { kRelu, kIdentity };
enum class Mode { kTrain, kEval };

template <typename Scalar>
struct BatchNorm {
  Vector<Scalar> gamma;
  Vector<Scalar> beta;
  Vector<Scalar> running_mean;
  Vector<Scalar> running_var;
  Scalar epsilon = Scalar(1e-5);
  Scalar momentum = Scalar(0.1);

  static BatchNorm fresh(Eigen::Index features) {
    BatchNorm bn;
    bn.gamma = Vector<Scalar>::Ones(features);
    bn.beta = Vector<Scalar>::Zero(features);
    bn.running_mean = Vector<Scalar>::Zero(features);
    bn.running_var = Vector<Scalar>::Ones(features);
    return bn;
  }
};

/// Fully connected layer y = f(BN(W x + b)). Neuron i owns weights.row(i)
/// and bias(i); a frozen neuron's affine parameters are never written by
/// the optimizer.
template <typename Scalar>
struct DenseLayer {
  std::string name;
  Matrix<Scalar> weights;
  Vector<Scalar> bias;
  Activation activation = Activation::kRelu;
  std::optional<BatchNorm<Scalar>> batch_norm;
  std::vector<bool> frozen;

  Eigen::Index neurons() const { return weights.rows(); }
  Eigen::Index fan_in() const { return weights.cols(); }
};

template <typename Scalar>
struct Mlp {
  std::vector<DenseLayer<Scalar>> layers;

  Eigen::Index input_dim() const { return layers.empty() ? 0 : layers.front().fan_in(); }
  Eigen::Index output_dim() const { return layers.empty() ? 0 : layers.back().neurons(); }

  DenseLayer<Scalar>& layer(std::string_view name) {
    for (auto& l : layers) {
      if (l.name == name) return l;
    }
    throw Error(Errc::kMissingTensor, "no layer named '" + std::string(name) + "'");
  }
  const DenseLayer<Scalar>& layer(std::string_view name) const {
    return const_cast<Mlp*>(this)->layer(name);
  }
  std::size_t layer_index(std::string_view name) const {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      if (layers[i].name == name) return i;
    }
    throw Error(Errc::kMissingTensor, "no layer named '" + std::string(name) + "'");
  }
};

template <typename To, typename From>
Mlp<To> mlp_cast(const Mlp<From>& src) {
  Mlp<To> out;
  for (const auto& l : src.layers) {
    DenseLayer<To> d;
    d.name = l.name;
    d.weights = l.weights.template cast<To>();
    d.bias = l.bias.template cast<To>();
    d.activation = l.activation;
    d.frozen = l.frozen;
    if (l.batch_norm) {
      BatchNorm<To> bn;
      bn.gamma = l.batch_norm->gamma.template cast<To>();
      bn.beta = l.batch_norm->beta.template cast<To>();
      bn.running_mean = l.batch_norm->running_mean.template cast<To>();
      bn.running_var = l.batch_norm->running_var.template cast<To>();
      bn.epsilon = static_cast<To>(l.batch_norm->epsilon);
      bn.momentum = static_cast<To>(l.batch_norm->momentum);
      d.batch_norm = bn;
    }
    out.layers.push_back(std::move(d));
  }
  return out;
}

template <typename Scalar>
struct LayerCache {
  Matrix<Scalar> input;      // [B, n]
  Matrix<Scalar> pre_norm;   // [B, m], W x + b
  Matrix<Scalar> normalized; // [B, m], BN only
  RowVector<Scalar> mean;    // BN statistics used for this pass
  RowVector<Scalar> var;
  RowVector<Scalar> inv_std;
  Matrix<Scalar> pre_activation;
  Matrix<Scalar> output;
};

template <typename Scalar>
struct ForwardPass {
  Mode mode = Mode::kEval;
  std::vector<LayerCache<Scalar>> layers;

  const Matrix<Scalar>& logits() const { return layers.back().output; }
};

/// Batch is [B, d], one sample per row. Train mode normalizes with batch
/// statistics; eval mode with running statistics. Never mutates the model.
template <typename Scalar>
ForwardPass<Scalar> forward_pass(const Mlp<Scalar>& model, const Matrix<Scalar>& batch,
                                 Mode mode) {
  if (model.layers.empty() || batch.cols() != model.input_dim()) {
    throw Error(Errc::kShapeMismatch,
                "batch has " + std::to_string(batch.cols()) + " features, model expects " +
                    std::to_string(model.input_dim()));
  }
  ForwardPass<Scalar> pass;
  pass.mode = mode;
  pass.layers.resize(model.layers.size());
  const Matrix<Scalar>* current = &batch;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& layer = model.layers[l];
    auto& c = pass.layers[l];
    c.input = *current;
    c.pre_norm = (c.input * layer.weights.transpose()).rowwise() + layer.bias.transpose();
    if (layer.batch_norm) {
      const auto& bn = *layer.batch_norm;
      if (mode == Mode::kTrain) {
        c.mean = c.pre_norm.colwise().mean();
        c.var = (c.pre_norm.rowwise() - c.mean).array().square().colwise().mean().matrix();
      } else {
        c.mean = bn.running_mean.transpose();
        c.var = bn.running_var.transpose();
      }
      c.inv_std = (c.var.array() + bn.epsilon).sqrt().inverse().matrix();
      c.normalized = ((c.pre_norm.rowwise() - c.mean).array().rowwise() *
                      c.inv_std.array())
                         .matrix();
      c.pre_activation = ((c.normalized.array().rowwise() * bn.gamma.transpose().array())
                              .rowwise() +
                          bn.beta.transpose().array())
                             .matrix();
    } else {
      c.pre_activation = c.pre_norm;
    }
    if (layer.activation == Activation::kRelu) {
      c.output = c.pre_activation.cwiseMax(Scalar(0));
    } else {
      c.output = c.pre_activation;
    }
    current = &c.output;
  }
  return pass;
}

template <typename Scalar>
Matrix<Scalar> forward(const Mlp<Scalar>& model, const Matrix<Scalar>& batch,
                       Mode mode = Mode::kEval) {
  return forward_pass(model, batch, mode).logits();
}

template <typename Scalar>
struct LossResult {
  Scalar loss = 0;
  Matrix<Scalar> dlogits;
  std::size_t correct = 0;
};

/// Mean softmax cross-entropy over the batch and its gradient.
template <typename Scalar>
LossResult<Scalar> softmax_cross_entropy(const Matrix<Scalar>& logits,
                                         std::span<const int> labels) {
  if (static_cast<std::size_t>(logits.rows()) != labels.size()) {
    throw Error(Errc::kShapeMismatch, "label count does not match batch size");
  }
  const Eigen::Index batch = logits.rows();
  LossResult<Scalar> r;
  r.dlogits.resize(logits.rows(), logits.cols());
  double total = 0.0;
  for (Eigen::Index i = 0; i < batch; ++i) {
    Eigen::Index argmax = 0;
    const Scalar peak = logits.row(i).maxCoeff(&argmax);
    const auto shifted = (logits.row(i).array() - peak).eval();
    const auto exps = shifted.exp().eval();
    const Scalar sum = exps.sum();
    const int y = labels[static_cast<std::size_t>(i)];
    total += static_cast<double>(std::log(sum) - shifted(y));
    r.dlogits.row(i) = (exps / sum).matrix();
    r.dlogits(i, y) -= Scalar(1);
    if (argmax == y) ++r.correct;
  }
  r.dlogits /= static_cast<Scalar>(batch);
  r.loss = static_cast<Scalar>(total / static_cast<double>(batch));
  return r;
}

template <typename Scalar>
struct LayerGradients {
  Matrix<Scalar> weights;
  Vector<Scalar> bias;
  Vector<Scalar> gamma;  // empty without BN
  Vector<Scalar> beta;
};

template <typename Scalar>
std::vector<LayerGradients<Scalar>> backward(const Mlp<Scalar>& model,
                                             const ForwardPass<Scalar>& pass,
                                             const Matrix<Scalar>& dlogits) {
  std::vector<LayerGradients<Scalar>> grads(model.layers.size());
  Matrix<Scalar> upstream = dlogits;
  for (std::size_t l = model.layers.size(); l-- > 0;) {
    const auto& layer = model.layers[l];
    const auto& c = pass.layers[l];
    auto& g = grads[l];

    Matrix<Scalar> dy = upstream;
    if (layer.activation == Activation::kRelu) {
      dy = (upstream.array() * (c.pre_activation.array() > Scalar(0)).template cast<Scalar>())
               .matrix();
    }

    Matrix<Scalar> dz;
    if (layer.batch_norm) {
      const auto& bn = *layer.batch_norm;
      g.gamma = (dy.array() * c.normalized.array()).colwise().sum().transpose().matrix();
      g.beta = dy.colwise().sum().transpose();
      const Matrix<Scalar> dxhat =
          (dy.array().rowwise() * bn.gamma.transpose().array()).matrix();
      if (pass.mode == Mode::kTrain) {
        const Scalar count = static_cast<Scalar>(dy.rows());
        const RowVector<Scalar> sum_dxhat = dxhat.colwise().sum();
        const RowVector<Scalar> sum_dxhat_xhat =
            (dxhat.array() * c.normalized.array()).colwise().sum().matrix();
        const auto centered =
            ((dxhat * count).rowwise() - sum_dxhat).array() -
            c.normalized.array().rowwise() * sum_dxhat_xhat.array();
        dz = ((centered.rowwise() * c.inv_std.array()) / count).matrix();
      } else {
        dz = (dxhat.array().rowwise() * c.inv_std.array()).matrix();
      }
    } else {
      dz = dy;
    }

    g.weights = dz.transpose() * c.input;
    g.bias = dz.colwise().sum().transpose();
    if (l > 0) upstream = dz * layer.weights;
  }
  return grads;
}

/// Plain SGD step. Frozen neurons keep their weights and bias bit-exact;
/// BN scale and shift always train.
template <typename Scalar>
void apply_sgd(Mlp<Scalar>& model, const std::vector<LayerGradients<Scalar>>& grads,
               Scalar learning_rate) {
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    auto& layer = model.layers[l];
    const auto& g = grads[l];
    for (Eigen::Index i = 0; i < layer.neurons(); ++i) {
      if (!layer.frozen.empty() && layer.frozen[static_cast<std::size_t>(i)]) continue;
      layer.weights.row(i) -= learning_rate * g.weights.row(i);
      layer.bias(i) -= learning_rate * g.bias(i);
    }
    if (layer.batch_norm) {
      layer.batch_norm->gamma -= learning_rate * g.gamma;
      layer.batch_norm->beta -= learning_rate * g.beta;
    }
  }
}

/// Folds the batch statistics of a train-mode pass into the running
/// estimates (unbiased variance).
template <typename Scalar>
void update_running_stats(Mlp<Scalar>& model, const ForwardPass<Scalar>& pass) {
  if (pass.mode != Mode::kTrain) return;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    auto& layer = model.layers[l];
    if (!layer.batch_norm) continue;
    auto& bn = *layer.batch_norm;
    const auto& c = pass.layers[l];
    const Scalar count = static_cast<Scalar>(c.input.rows());
    const Scalar correction = count > Scalar(1) ? count / (count - Scalar(1)) : Scalar(1);
    bn.running_mean = (Scalar(1) - bn.momentum) * bn.running_mean +
                      bn.momentum * c.mean.transpose();
    bn.running_var = (Scalar(1) - bn.momentum) * bn.running_var +
                     bn.momentum * correction * c.var.transpose();
  }
}

}  // namespace nnstego
