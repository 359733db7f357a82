// SPDX-License-Identifier: Apache-2.0
// Central finite-difference check of backward() on random dense networks.
#pragma once

#include "fact/nn.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

namespace fact::testing {

struct GradCheckResult {
  double max_param_error = 0.0;
  double max_input_error = 0.0;
  int layers = 0;
  int max_width = 0;
  int skipped = 0;  // coordinates whose +-h step crossed a ReLU kink
};

/// Sign pattern of every ReLU pre-activation; a change between the two
/// probe points means the difference quotient straddles a kink.
inline std::vector<bool> relu_pattern(const Network& net, const Eigen::MatrixXd& in) {
  const ForwardCache cache = forward_batch(net, in);
  std::vector<bool> out;
  for (std::size_t l = 0; l < net.depth(); ++l) {
    if (net.layers()[l].activation != Activation::kRelu) continue;
    for (double z : cache.preactivations[l].reshaped()) out.push_back(z > 0.0);
  }
  return out;
}

/// |a - n| / max(|a|, |n|, floor). The floor keeps entries that are zero up
/// to rounding from dominating: at h = 1e-6 the difference quotient carries
/// about 1e-10 of cancellation noise.
inline double relative_error(double analytic, double numeric, double floor = 1e-5) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Builds a network with 1..4 layers of width <= 32 and random activations,
/// then compares analytic gradients of L = sum(c .* y) against central
/// differences for every parameter and input.
inline GradCheckResult random_gradient_check(std::mt19937_64& rng, double h = 1e-6) {
  std::uniform_int_distribution<int> depth_draw(1, 4);
  std::uniform_int_distribution<int> width_draw(1, 32);
  std::uniform_int_distribution<int> hidden_act(0, 2);
  std::uniform_int_distribution<int> out_act(0, 3);
  const Activation hidden[] = {Activation::kLinear, Activation::kRelu, Activation::kSigmoid};
  const Activation output[] = {Activation::kLinear, Activation::kRelu, Activation::kSigmoid, Activation::kSoftmax};

  const int depth = depth_draw(rng);
  std::vector<int> widths{width_draw(rng)};
  std::vector<Activation> acts;
  for (int l = 0; l < depth; ++l) {
    const bool last = l + 1 == depth;
    Activation a = last ? output[out_act(rng)] : hidden[hidden_act(rng)];
    int w = width_draw(rng);
    if (a == Activation::kSoftmax) w = std::max(w, 2);
    widths.push_back(w);
    acts.push_back(a);
  }
  Network net = Network::dense(widths, acts, rng);
  std::normal_distribution<double> g(0.0, 0.5);
  for (auto& layer : net.layers()) {
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias[i] = g(rng);
  }

  const int batch = 3;
  Eigen::MatrixXd x(widths.front(), batch);
  for (auto& v : x.reshaped()) v = g(rng);
  Eigen::MatrixXd c(widths.back(), batch);
  for (auto& v : c.reshaped()) v = g(rng);

  const auto loss = [&](const Network& n, const Eigen::MatrixXd& in) {
    return (forward_batch(n, in).output().array() * c.array()).sum();
  };
  const ForwardCache cache = forward_batch(net, x);
  const Gradients grads = backward(net, cache, c);

  GradCheckResult result;
  result.layers = depth;
  result.max_width = *std::max_element(widths.begin(), widths.end());
  for (std::size_t l = 0; l < net.depth(); ++l) {
    Layer& layer = net.layers()[l];
    for (Eigen::Index i = 0; i < layer.weights.size(); ++i) {
      double& w = layer.weights.reshaped()[i];
      const double saved = w;
      w = saved + h;
      const double up = loss(net, x);
      const auto up_pattern = relu_pattern(net, x);
      w = saved - h;
      const double down = loss(net, x);
      const bool kink = relu_pattern(net, x) != up_pattern;
      w = saved;
      if (kink) {
        ++result.skipped;
        continue;
      }
      result.max_param_error = std::max(
          result.max_param_error, relative_error(grads.weights[l].reshaped()[i], (up - down) / (2 * h)));
    }
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) {
      double& b = layer.bias[i];
      const double saved = b;
      b = saved + h;
      const double up = loss(net, x);
      const auto up_pattern = relu_pattern(net, x);
      b = saved - h;
      const double down = loss(net, x);
      const bool kink = relu_pattern(net, x) != up_pattern;
      b = saved;
      if (kink) {
        ++result.skipped;
        continue;
      }
      result.max_param_error =
          std::max(result.max_param_error, relative_error(grads.bias[l][i], (up - down) / (2 * h)));
    }
  }
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::MatrixXd xp = x;
    Eigen::MatrixXd xm = x;
    xp.reshaped()[i] += h;
    xm.reshaped()[i] -= h;
    if (relu_pattern(net, xp) != relu_pattern(net, xm)) {
      ++result.skipped;
      continue;
    }
    result.max_input_error = std::max(
        result.max_input_error, relative_error(grads.input.reshaped()[i], (loss(net, xp) - loss(net, xm)) / (2 * h)));
  }
  return result;
}

}  // namespace fact::testing
