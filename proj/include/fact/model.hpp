// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "fact/codec.hpp"
#include "fact/data.hpp"
#include "fact/nn.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace fact {

/// Layer widths of the autoencoder and predictor. `encoder.front()` is the
/// width of the binary input layer (features x bits); the decoder mirrors the
/// encoder.
struct ArchitectureSpec {
  std::vector<int> encoder;
  std::vector<int> predictor;
  int bits = kDefaultBits;
  int classes = 2;

  static ArchitectureSpec make(std::size_t features, std::vector<int> encoder_hidden,
                               std::vector<int> predictor_hidden, int classes, int bits = kDefaultBits);

  std::size_t num_features() const { return static_cast<std::size_t>(encoder.front() / bits); }
  std::size_t encoder_depth() const { return encoder.size() - 1; }
  int code_width() const { return encoder.back(); }
  void validate() const;
};

struct CorruptionConfig {
  double alpha = 1.5;
  double beta = 1.5;
  std::uint64_t seed = 0;

  void validate() const;
  double mean_missing() const { return alpha / (alpha + beta); }
};

struct TrainConfig {
  OptimizerConfig optimizer;
  /// Learning-rate multiplier for the pre-trained encoder layers during
  /// fine-tuning (0.1 x 0.001 = 0.0001).
  double encoder_lr_multiplier = 0.1;
  int batch_size = 128;
  int max_epochs = 200;
  int patience = 10;
  std::uint64_t seed = 0;
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double validation = 0.0;
  double best_validation = 0.0;
};

struct TrainingLog {
  std::vector<EpochLog> autoencoder;
  std::vector<EpochLog> predictor;
};

/// Everything needed at test time. The autoencoder is the frozen copy taken
/// right after reconstruction training; only the predictor is fine-tuned.
struct ModelBundle {
  Network autoencoder;
  Network predictor;
  ArchitectureSpec architecture;
  NormalizationSpec normalization;
  CostSchedule costs;
  CorruptionConfig corruption;
  std::vector<std::string> feature_names;
  std::vector<std::string> class_names;
  std::uint64_t dataset_fingerprint = 0;

  std::size_t num_features() const { return architecture.num_features(); }
  std::size_t num_classes() const { return static_cast<std::size_t>(architecture.classes); }
  int bits() const { return architecture.bits; }
  bool trained() const { return !autoencoder.empty() && !predictor.empty(); }
};

double sample_beta(double alpha, double beta, std::mt19937_64& rng);

/// Marks each currently-known feature unknown with probability `p`.
MaskVector corrupt_with_probability(const MaskVector& initial, double p, std::mt19937_64& rng);

/// Draws p ~ Beta(alpha, beta) once, then corrupts with it.
MaskVector beta_corrupt(const MaskVector& initial, const CorruptionConfig& config, std::mt19937_64& rng);

Network build_autoencoder(const ArchitectureSpec& arch, std::mt19937_64& rng);

/// Denoising reconstruction training with early stopping on validation loss.
/// `train` and `validation` must already be normalized.
Network train_autoencoder(const Dataset& train, const Dataset& validation, const ArchitectureSpec& arch,
                          const CorruptionConfig& corruption, const TrainConfig& config,
                          TrainingLog* log = nullptr);

/// Stacks prediction layers on a copy of the trained encoder and fine-tunes
/// on corrupted inputs, early-stopping on validation accuracy. The returned
/// bundle holds `autoencoder` unchanged as its frozen copy; normalization and
/// costs are left for the caller to fill.
ModelBundle train_predictor(const Network& autoencoder, const Dataset& train, const Dataset& validation,
                            const ArchitectureSpec& arch, const CorruptionConfig& corruption,
                            const TrainConfig& config, TrainingLog* log = nullptr);

struct TrainingInputs {
  Dataset train;       // normalized
  Dataset validation;  // normalized
  NormalizationSpec normalization;
  CostSchedule costs;
  std::uint64_t dataset_fingerprint = 0;
};

/// Autoencoder then predictor; fills every bundle field.
ModelBundle train_model(const TrainingInputs& inputs, const ArchitectureSpec& arch,
                        const CorruptionConfig& corruption, const TrainConfig& config,
                        TrainingLog* log = nullptr);

/// Probability of each bit being set, from the frozen autoencoder.
BitMatrix reconstruct_probabilities(const ModelBundle& bundle, const Eigen::Ref<const Eigen::VectorXd>& x,
                                    const MaskVector& known);

/// Class probabilities of the predictor on the masked encoding.
Eigen::VectorXd predict(const ModelBundle& bundle, const Eigen::Ref<const Eigen::VectorXd>& x,
                        const MaskVector& known);

/// Percentage reduction of the distance to the complete vector achieved by
/// reconstruction, averaged over instances with at least one corrupted
/// non-zero feature. Corruption follows `evaluation` with its own seed.
double denoising_percentage(const ModelBundle& bundle, const Dataset& test, const CorruptionConfig& evaluation);

/// Accuracy of the predictor with every feature known.
double full_feature_accuracy(const ModelBundle& bundle, const Dataset& test);

void save_bundle(const ModelBundle& bundle, const std::filesystem::path& dir);
ModelBundle load_bundle(const std::filesystem::path& dir);
nlohmann::json bundle_manifest(const ModelBundle& bundle);

}  // namespace fact
