// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "fact/codec.hpp"

#include <Eigen/Dense>

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace fact {

enum class Activation { kLinear, kRelu, kSigmoid, kSoftmax };

std::string_view to_string(Activation activation);
Activation activation_from_string(std::string_view name);

struct Layer {
  Eigen::MatrixXd weights;  // outputs x inputs
  Eigen::VectorXd bias;
  Activation activation = Activation::kLinear;
  /// Scales the optimizer learning rate for this layer; 0 freezes it.
  double lr_multiplier = 1.0;

  Eigen::Index inputs() const { return weights.cols(); }
  Eigen::Index outputs() const { return weights.rows(); }

  bool operator==(const Layer& other) const;
};

/// Fully connected feed-forward stack. Samples are columns.
class Network {
 public:
  Network() = default;
  explicit Network(std::vector<Layer> layers);

  /// Glorot-uniform weights, zero biases. `widths` has one more entry than `activations`.
  static Network dense(std::span<const int> widths, std::span<const Activation> activations,
                       std::mt19937_64& rng);

  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }
  std::size_t depth() const { return layers_.size(); }
  bool empty() const { return layers_.empty(); }

  Eigen::Index input_width() const;
  Eigen::Index output_width() const;

  void append(Layer layer);
  bool all_finite() const;

  bool operator==(const Network& other) const { return layers_ == other.layers_; }

 private:
  void check_chain() const;

  std::vector<Layer> layers_;
};

struct ForwardCache {
  /// activations[0] is the input; activations[i + 1] is the output of layer i.
  std::vector<Eigen::MatrixXd> activations;
  std::vector<Eigen::MatrixXd> preactivations;

  const Eigen::MatrixXd& output() const { return activations.back(); }
};

ForwardCache forward_batch(const Network& net, const Eigen::Ref<const Eigen::MatrixXd>& inputs);
Eigen::VectorXd forward(const Network& net, const Eigen::Ref<const Eigen::VectorXd>& input,
                        ForwardCache* cache = nullptr);

/// Where the incoming gradient of `backward` is taken: at the network output, or
/// at the last layer's pre-activation (fused softmax/sigmoid cross-entropy).
enum class GradientSite { kOutput, kPreActivation };

struct Gradients {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> bias;
  Eigen::MatrixXd input;  // input_width x batch
};

Gradients backward(const Network& net, const ForwardCache& cache,
                   const Eigen::Ref<const Eigen::MatrixXd>& output_grad,
                   GradientSite site = GradientSite::kOutput);

/// d output / d input, outputs x inputs, by reverse-mode propagation of the identity.
Eigen::MatrixXd input_jacobian(const Network& net, const Eigen::Ref<const Eigen::VectorXd>& input);

/// Per input coordinate: sum over outputs of |d output_i / d input|.
Eigen::VectorXd input_sensitivity(const Network& net, const Eigen::Ref<const Eigen::VectorXd>& input);

struct OptimizerConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

class AdamState {
 public:
  AdamState() = default;
  explicit AdamState(const Network& net);

  std::int64_t step() const { return step_; }

 private:
  friend void adam_step(Network&, const Gradients&, const OptimizerConfig&, AdamState&);

  std::int64_t step_ = 0;
  std::vector<Eigen::MatrixXd> m_weights, v_weights;
  std::vector<Eigen::VectorXd> m_bias, v_bias;
};

/// One bias-corrected Adam update; the layer multiplier scales the learning rate.
void adam_step(Network& net, const Gradients& grads, const OptimizerConfig& config, AdamState& state);

inline constexpr double kProbabilityClip = 1e-7;

/// Weighted binary cross-entropy between an exact encoding and bit
/// probabilities; bit b (0-based) is weighted 2^-b.
double weighted_bit_xent(const BitMatrix& target, const BitMatrix& predicted);

/// Batched form over columns (d*bits x batch). Returns the batch mean; when
/// `logit_grad` is set it receives the gradient of that mean with respect to
/// the sigmoid pre-activations.
double weighted_bit_xent_batch(const Eigen::Ref<const Eigen::MatrixXd>& target,
                               const Eigen::Ref<const Eigen::MatrixXd>& predicted, int bits,
                               Eigen::MatrixXd* logit_grad = nullptr);

/// d loss / d predicted probability for the single-instance loss (no clipping
/// region handling beyond the clip itself).
BitMatrix weighted_bit_xent_grad(const BitMatrix& target, const BitMatrix& predicted);

Eigen::VectorXd softmax(const Eigen::Ref<const Eigen::VectorXd>& logits);

struct SoftmaxXent {
  double loss = 0.0;
  Eigen::VectorXd logit_grad;
};

SoftmaxXent softmax_xent(const Eigen::Ref<const Eigen::VectorXd>& logits, int label);

nlohmann::json to_json(const Network& net);
Network network_from_json(const nlohmann::json& doc);
void save_network(const Network& net, const std::filesystem::path& path);
Network load_network(const std::filesystem::path& path);

}  // namespace fact
