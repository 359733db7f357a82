// SPDX-License-Identifier: Apache-2.0
#include "fact/nn.hpp"

#include "fact/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

namespace fact {

using json = nlohmann::json;

std::string_view to_string(Activation activation) {
  switch (activation) {
    case Activation::kLinear: return "linear";
    case Activation::kRelu: return "relu";
    case Activation::kSigmoid: return "sigmoid";
    case Activation::kSoftmax: return "softmax";
  }
  return "linear";
}

Activation activation_from_string(std::string_view name) {
  if (name == "linear") return Activation::kLinear;
  if (name == "relu") return Activation::kRelu;
  if (name == "sigmoid") return Activation::kSigmoid;
  if (name == "softmax") return Activation::kSoftmax;
  throw Error(ErrorCode::kParse, "unknown activation '" + std::string(name) + "'");
}

bool Layer::operator==(const Layer& other) const {
  return activation == other.activation && lr_multiplier == other.lr_multiplier &&
         weights.rows() == other.weights.rows() && weights.cols() == other.weights.cols() &&
         bias.size() == other.bias.size() && weights == other.weights && bias == other.bias;
}

Network::Network(std::vector<Layer> layers) : layers_(std::move(layers)) { check_chain(); }

Network Network::dense(std::span<const int> widths, std::span<const Activation> activations,
                       std::mt19937_64& rng) {
  if (widths.size() != activations.size() + 1) {
    throw Error(ErrorCode::kInvalidArgument, "dense: need one more width than activations");
  }
  std::vector<Layer> layers;
  for (std::size_t i = 0; i < activations.size(); ++i) {
    const int fan_in = widths[i];
    const int fan_out = widths[i + 1];
    if (fan_in < 1 || fan_out < 1) throw Error(ErrorCode::kInvalidArgument, "layer widths must be >= 1");
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> draw(-limit, limit);
    Layer layer;
    layer.weights.resize(fan_out, fan_in);
    for (Eigen::Index r = 0; r < fan_out; ++r) {
      for (Eigen::Index c = 0; c < fan_in; ++c) layer.weights(r, c) = draw(rng);
    }
    layer.bias = Eigen::VectorXd::Zero(fan_out);
    layer.activation = activations[i];
    layers.push_back(std::move(layer));
  }
  return Network(std::move(layers));
}

Eigen::Index Network::input_width() const { return layers_.empty() ? 0 : layers_.front().inputs(); }
Eigen::Index Network::output_width() const { return layers_.empty() ? 0 : layers_.back().outputs(); }

void Network::append(Layer layer) {
  layers_.push_back(std::move(layer));
  check_chain();
}

bool Network::all_finite() const {
  return std::all_of(layers_.begin(), layers_.end(), [](const Layer& l) {
    return l.weights.allFinite() && l.bias.allFinite();
  });
}

void Network::check_chain() const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& layer = layers_[i];
    if (layer.bias.size() != layer.outputs()) {
      throw Error(ErrorCode::kDimensionMismatch, "layer " + std::to_string(i) + " bias width mismatch");
    }
    if (i > 0 && layers_[i - 1].outputs() != layer.inputs()) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "layer " + std::to_string(i) + " expects " + std::to_string(layer.inputs()) +
                      " inputs but previous layer emits " + std::to_string(layers_[i - 1].outputs()));
    }
  }
}

namespace {

void activate(Activation activation, const Eigen::MatrixXd& z, Eigen::MatrixXd& a) {
  switch (activation) {
    case Activation::kLinear:
      a = z;
      break;
    case Activation::kRelu:
      a = z.cwiseMax(0.0);
      break;
    case Activation::kSigmoid:
      a = (1.0 + (-z.array()).exp()).inverse().matrix();
      break;
    case Activation::kSoftmax:
      a.resize(z.rows(), z.cols());
      for (Eigen::Index c = 0; c < z.cols(); ++c) a.col(c) = softmax(z.col(c));
      break;
  }
}

// Maps a gradient at a layer's output to its pre-activation.
Eigen::MatrixXd through_activation(Activation activation, const Eigen::MatrixXd& z, const Eigen::MatrixXd& a,
                                   const Eigen::MatrixXd& grad) {
  switch (activation) {
    case Activation::kLinear:
      return grad;
    case Activation::kRelu:
      return (z.array() > 0.0).select(grad, 0.0);
    case Activation::kSigmoid:
      return (grad.array() * a.array() * (1.0 - a.array())).matrix();
    case Activation::kSoftmax: {
      Eigen::MatrixXd out(grad.rows(), grad.cols());
      for (Eigen::Index c = 0; c < grad.cols(); ++c) {
        const double dot = a.col(c).dot(grad.col(c));
        out.col(c) = (a.col(c).array() * (grad.col(c).array() - dot)).matrix();
      }
      return out;
    }
  }
  return grad;
}

}  // namespace

ForwardCache forward_batch(const Network& net, const Eigen::Ref<const Eigen::MatrixXd>& inputs) {
  if (net.empty()) throw Error(ErrorCode::kInvalidArgument, "forward on an empty network");
  if (inputs.rows() != net.input_width()) {
    throw Error(ErrorCode::kDimensionMismatch, "forward: input width " + std::to_string(inputs.rows()) +
                                                   " but network expects " +
                                                   std::to_string(net.input_width()));
  }
  if (!inputs.allFinite()) throw Error(ErrorCode::kNonFinite, "forward: non-finite input");
  ForwardCache cache;
  cache.activations.reserve(net.depth() + 1);
  cache.preactivations.reserve(net.depth());
  cache.activations.emplace_back(inputs);
  for (const auto& layer : net.layers()) {
    Eigen::MatrixXd z = layer.weights * cache.activations.back();
    z.colwise() += layer.bias;
    Eigen::MatrixXd a;
    activate(layer.activation, z, a);
    cache.preactivations.push_back(std::move(z));
    cache.activations.push_back(std::move(a));
  }
  return cache;
}

Eigen::VectorXd forward(const Network& net, const Eigen::Ref<const Eigen::VectorXd>& input, ForwardCache* cache) {
  if (cache) {
    *cache = forward_batch(net, input);
    return cache->output().col(0);
  }
  if (net.empty()) throw Error(ErrorCode::kInvalidArgument, "forward on an empty network");
  if (input.size() != net.input_width()) {
    throw Error(ErrorCode::kDimensionMismatch, "forward: input width " + std::to_string(input.size()) +
                                                   " but network expects " +
                                                   std::to_string(net.input_width()));
  }
  if (!input.allFinite()) throw Error(ErrorCode::kNonFinite, "forward: non-finite input");
  Eigen::VectorXd a = input;
  for (const auto& layer : net.layers()) {
    Eigen::VectorXd z = layer.weights * a + layer.bias;
    switch (layer.activation) {
      case Activation::kLinear: a = std::move(z); break;
      case Activation::kRelu: a = z.cwiseMax(0.0); break;
      case Activation::kSigmoid: a = (1.0 + (-z.array()).exp()).inverse().matrix(); break;
      case Activation::kSoftmax: a = softmax(z); break;
    }
  }
  return a;
}

Gradients backward(const Network& net, const ForwardCache& cache, const Eigen::Ref<const Eigen::MatrixXd>& output_grad,
                   GradientSite site) {
  const auto depth = net.depth();
  if (cache.preactivations.size() != depth || cache.activations.size() != depth + 1) {
    throw Error(ErrorCode::kDimensionMismatch, "backward: cache does not match network depth");
  }
  const auto batch = cache.activations.front().cols();
  if (output_grad.rows() != net.output_width() || output_grad.cols() != batch) {
    throw Error(ErrorCode::kDimensionMismatch, "backward: output gradient shape mismatch");
  }
  for (std::size_t i = 0; i < depth; ++i) {
    if (cache.preactivations[i].rows() != net.layers()[i].outputs() ||
        cache.activations[i].rows() != net.layers()[i].inputs()) {
      throw Error(ErrorCode::kDimensionMismatch, "backward: stale cache for layer " + std::to_string(i));
    }
  }

  Gradients grads;
  grads.weights.resize(depth);
  grads.bias.resize(depth);
  Eigen::MatrixXd grad = output_grad;
  for (std::size_t k = depth; k-- > 0;) {
    const auto& layer = net.layers()[k];
    Eigen::MatrixXd delta = (k + 1 == depth && site == GradientSite::kPreActivation)
                                ? grad
                                : through_activation(layer.activation, cache.preactivations[k],
                                                     cache.activations[k + 1], grad);
    grads.weights[k] = delta * cache.activations[k].transpose();
    grads.bias[k] = delta.rowwise().sum();
    grad = layer.weights.transpose() * delta;
  }
  grads.input = std::move(grad);
  return grads;
}

Eigen::MatrixXd input_jacobian(const Network& net, const Eigen::Ref<const Eigen::VectorXd>& input) {
  const ForwardCache cache = forward_batch(net, input);
  // Rows of `jac` are d output / d (current layer output).
  Eigen::MatrixXd jac = Eigen::MatrixXd::Identity(net.output_width(), net.output_width());
  for (std::size_t k = net.depth(); k-- > 0;) {
    const auto& layer = net.layers()[k];
    const Eigen::VectorXd z = cache.preactivations[k].col(0);
    const Eigen::VectorXd a = cache.activations[k + 1].col(0);
    switch (layer.activation) {
      case Activation::kLinear:
        break;
      case Activation::kRelu:
        jac = jac * (z.array() > 0.0).cast<double>().matrix().asDiagonal();
        break;
      case Activation::kSigmoid:
        jac = jac * (a.array() * (1.0 - a.array())).matrix().asDiagonal();
        break;
      case Activation::kSoftmax: {
        const Eigen::MatrixXd ds = Eigen::MatrixXd(a.asDiagonal()) - a * a.transpose();
        jac = jac * ds;
        break;
      }
    }
    jac = jac * layer.weights;
  }
  return jac;
}

Eigen::VectorXd input_sensitivity(const Network& net, const Eigen::Ref<const Eigen::VectorXd>& input) {
  return input_jacobian(net, input).cwiseAbs().colwise().sum().transpose();
}

void OptimizerConfig::validate() const {
  if (!(learning_rate > 0.0) || !(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) ||
      !(epsilon > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "invalid Adam configuration");
  }
}

AdamState::AdamState(const Network& net) {
  for (const auto& layer : net.layers()) {
    m_weights.push_back(Eigen::MatrixXd::Zero(layer.outputs(), layer.inputs()));
    v_weights.push_back(Eigen::MatrixXd::Zero(layer.outputs(), layer.inputs()));
    m_bias.push_back(Eigen::VectorXd::Zero(layer.outputs()));
    v_bias.push_back(Eigen::VectorXd::Zero(layer.outputs()));
  }
}

void adam_step(Network& net, const Gradients& grads, const OptimizerConfig& config, AdamState& state) {
  config.validate();
  const auto depth = net.depth();
  if (grads.weights.size() != depth || grads.bias.size() != depth || state.m_weights.size() != depth) {
    throw Error(ErrorCode::kDimensionMismatch, "adam_step: gradient/state depth mismatch");
  }
  for (std::size_t k = 0; k < depth; ++k) {
    if (!grads.weights[k].allFinite() || !grads.bias[k].allFinite()) {
      throw Error(ErrorCode::kNonFinite, "adam_step: non-finite gradient in layer " + std::to_string(k));
    }
    if (grads.weights[k].rows() != net.layers()[k].outputs() ||
        grads.weights[k].cols() != net.layers()[k].inputs()) {
      throw Error(ErrorCode::kDimensionMismatch, "adam_step: gradient shape mismatch");
    }
  }

  ++state.step_;
  const double t = static_cast<double>(state.step_);
  const double correction1 = 1.0 - std::pow(config.beta1, t);
  const double correction2 = 1.0 - std::pow(config.beta2, t);

  const auto update = [&](auto& param, const auto& grad, auto& m, auto& v, double rate) {
    m = config.beta1 * m + (1.0 - config.beta1) * grad;
    v = config.beta2 * v + (1.0 - config.beta2) * grad.cwiseAbs2();
    if (rate == 0.0) return;
    param.array() -= rate * (m.array() / correction1) / ((v.array() / correction2).sqrt() + config.epsilon);
  };
  for (std::size_t k = 0; k < depth; ++k) {
    auto& layer = net.layers()[k];
    const double rate = config.learning_rate * layer.lr_multiplier;
    update(layer.weights, grads.weights[k], state.m_weights[k], state.v_weights[k], rate);
    update(layer.bias, grads.bias[k], state.m_bias[k], state.v_bias[k], rate);
  }
}

double weighted_bit_xent(const BitMatrix& target, const BitMatrix& predicted) {
  if (target.features() != predicted.features() || target.bits() != predicted.bits()) {
    throw Error(ErrorCode::kDimensionMismatch, "weighted_bit_xent: shape mismatch");
  }
  return weighted_bit_xent_batch(target.flat(), predicted.flat(), target.bits());
}

double weighted_bit_xent_batch(const Eigen::Ref<const Eigen::MatrixXd>& target,
                               const Eigen::Ref<const Eigen::MatrixXd>& predicted, int bits,
                               Eigen::MatrixXd* logit_grad) {
  if (target.rows() != predicted.rows() || target.cols() != predicted.cols() || target.rows() % bits != 0) {
    throw Error(ErrorCode::kDimensionMismatch, "weighted_bit_xent: shape mismatch");
  }
  const auto batch = static_cast<double>(target.cols());
  if (target.cols() == 0) return 0.0;
  Eigen::VectorXd weights(target.rows());
  for (Eigen::Index i = 0; i < target.rows(); ++i) weights[i] = bit_loss_weight(static_cast<int>(i % bits));

  const Eigen::ArrayXXd p = predicted.array().max(kProbabilityClip).min(1.0 - kProbabilityClip);
  const Eigen::ArrayXXd t = target.array();
  const Eigen::ArrayXXd elementwise = -(t * p.log() + (1.0 - t) * (1.0 - p).log());
  const double loss = (elementwise.matrix().transpose() * weights).sum() / batch;
  if (logit_grad) {
    *logit_grad = ((predicted.array() - t).colwise() * weights.array() / batch).matrix();
  }
  return loss;
}

BitMatrix weighted_bit_xent_grad(const BitMatrix& target, const BitMatrix& predicted) {
  if (target.features() != predicted.features() || target.bits() != predicted.bits()) {
    throw Error(ErrorCode::kDimensionMismatch, "weighted_bit_xent_grad: shape mismatch");
  }
  BitMatrix grad(target.features(), target.bits());
  for (std::size_t j = 0; j < target.features(); ++j) {
    for (int b = 0; b < target.bits(); ++b) {
      const double p = std::clamp(predicted(j, b), kProbabilityClip, 1.0 - kProbabilityClip);
      const double t = target(j, b);
      grad(j, b) = bit_loss_weight(b) * (-(t / p) + (1.0 - t) / (1.0 - p));
    }
  }
  return grad;
}

Eigen::VectorXd softmax(const Eigen::Ref<const Eigen::VectorXd>& logits) {
  const double peak = logits.maxCoeff();
  Eigen::VectorXd e = (logits.array() - peak).exp().matrix();
  return e / e.sum();
}

SoftmaxXent softmax_xent(const Eigen::Ref<const Eigen::VectorXd>& logits, int label) {
  if (logits.size() < 2) throw Error(ErrorCode::kInvalidArgument, "softmax_xent needs at least 2 classes");
  if (label < 0 || label >= logits.size()) {
    throw Error(ErrorCode::kOutOfRange, "label " + std::to_string(label) + " out of range");
  }
  const double peak = logits.maxCoeff();
  const double log_sum = peak + std::log((logits.array() - peak).exp().sum());
  SoftmaxXent out;
  out.loss = log_sum - logits[label];
  out.logit_grad = softmax(logits);
  out.logit_grad[label] -= 1.0;
  return out;
}

json to_json(const Network& net) {
  json doc;
  doc["version"] = 1;
  doc["layers"] = json::array();
  for (const auto& layer : net.layers()) {
    std::vector<double> weights;
    weights.reserve(static_cast<std::size_t>(layer.weights.size()));
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) weights.push_back(layer.weights(r, c));
    }
    doc["layers"].push_back({{"rows", layer.outputs()},
                             {"cols", layer.inputs()},
                             {"activation", to_string(layer.activation)},
                             {"lr_multiplier", layer.lr_multiplier},
                             {"weights", std::move(weights)},
                             {"bias", std::vector<double>(layer.bias.data(), layer.bias.data() + layer.bias.size())}});
  }
  return doc;
}

Network network_from_json(const json& doc) {
  try {
    if (doc.at("version").get<int>() != 1) throw Error(ErrorCode::kParse, "unsupported network version");
    std::vector<Layer> layers;
    for (const auto& entry : doc.at("layers")) {
      Layer layer;
      const auto rows = entry.at("rows").get<Eigen::Index>();
      const auto cols = entry.at("cols").get<Eigen::Index>();
      const auto weights = entry.at("weights").get<std::vector<double>>();
      const auto bias = entry.at("bias").get<std::vector<double>>();
      if (static_cast<Eigen::Index>(weights.size()) != rows * cols || static_cast<Eigen::Index>(bias.size()) != rows) {
        throw Error(ErrorCode::kParse, "network layer array sizes do not match rows/cols");
      }
      layer.weights.resize(rows, cols);
      for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) layer.weights(r, c) = weights[static_cast<std::size_t>(r * cols + c)];
      }
      layer.bias = Eigen::Map<const Eigen::VectorXd>(bias.data(), rows);
      layer.activation = activation_from_string(entry.at("activation").get<std::string>());
      layer.lr_multiplier = entry.value("lr_multiplier", 1.0);
      layers.push_back(std::move(layer));
    }
    return Network(std::move(layers));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("network checkpoint: ") + e.what());
  }
}

void save_network(const Network& net, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << to_json(net).dump() << '\n';
  if (!out) throw Error(ErrorCode::kIo, "failed writing " + path.string());
}

Network load_network(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, path.string() + ": " + e.what());
  }
  return network_from_json(doc);
}

}  // namespace fact
