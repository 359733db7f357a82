// SPDX-License-Identifier: Apache-2.0
// Shared fixtures for the test binaries.
#pragma once

#include "fact/acquire.hpp"
#include "fact/model.hpp"

#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>

namespace fact::testing {

/// Untrained but structurally valid bundle over [0, 1] features.
inline ModelBundle random_bundle(std::size_t d, int classes, std::uint64_t seed, CostSchedule costs = {},
                                 int bits = kDefaultBits) {
  std::mt19937_64 rng(seed);
  ModelBundle b;
  b.architecture = ArchitectureSpec::make(d, {12, 6}, {6}, classes, bits);
  b.autoencoder = build_autoencoder(b.architecture, rng);
  std::vector<Layer> layers(b.autoencoder.layers().begin(), b.autoencoder.layers().begin() + 2);
  const int head_widths[] = {6, 6, classes};
  const Activation head_acts[] = {Activation::kRelu, Activation::kSoftmax};
  const Network head = Network::dense(head_widths, head_acts, rng);
  for (const auto& layer : head.layers()) layers.push_back(layer);
  // Randomize biases so ReLU units are not all active at the origin.
  std::normal_distribution<double> noise(0.0, 0.3);
  for (auto& layer : layers) {
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias[i] = noise(rng);
  }
  b.predictor = Network(std::move(layers));
  b.normalization.min.assign(d, 0.0);
  b.normalization.max.assign(d, 1.0);
  b.normalization.bits = bits;
  b.normalization.computed_on = "train";
  for (std::size_t j = 0; j < d; ++j) b.feature_names.push_back("f" + std::to_string(j));
  for (int k = 0; k < classes; ++k) b.class_names.push_back("c" + std::to_string(k));
  b.costs = costs.num_features() == d ? std::move(costs) : CostSchedule(std::vector<double>(d, 1.0), {}, b.feature_names);
  return b;
}

inline Eigen::VectorXd random_values(std::size_t d, std::mt19937_64& rng, int bits = kDefaultBits) {
  std::uniform_real_distribution<double> u(0.0, max_representable(bits));
  Eigen::VectorXd x(static_cast<Eigen::Index>(d));
  for (auto& v : x) v = u(rng);
  return x;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& tag) {
  static int counter = 0;
  auto dir = std::filesystem::temp_directory_path() /
             ("fact_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace fact::testing
