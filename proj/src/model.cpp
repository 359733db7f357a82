// SPDX-License-Identifier: Apache-2.0
#include "fact/model.hpp"

#include "fact/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace fact {

using json = nlohmann::json;

ArchitectureSpec ArchitectureSpec::make(std::size_t features, std::vector<int> encoder_hidden,
                                        std::vector<int> predictor_hidden, int classes, int bits) {
  ArchitectureSpec arch;
  arch.bits = bits;
  arch.classes = classes;
  arch.encoder.push_back(static_cast<int>(features) * bits);
  arch.encoder.insert(arch.encoder.end(), encoder_hidden.begin(), encoder_hidden.end());
  arch.predictor = std::move(predictor_hidden);
  arch.validate();
  return arch;
}

void ArchitectureSpec::validate() const {
  if (bits < 1 || bits > 30) throw Error(ErrorCode::kInvalidArgument, "bits must be in [1, 30]");
  if (encoder.size() < 2) throw Error(ErrorCode::kInvalidArgument, "encoder needs at least one hidden layer");
  if (encoder.front() % bits != 0) {
    throw Error(ErrorCode::kInvalidArgument, "encoder input width must be features x bits");
  }
  const auto positive = [](int w) { return w >= 1; };
  if (!std::all_of(encoder.begin(), encoder.end(), positive) ||
      !std::all_of(predictor.begin(), predictor.end(), positive)) {
    throw Error(ErrorCode::kInvalidArgument, "all layer widths must be >= 1");
  }
  if (classes < 2) throw Error(ErrorCode::kInvalidArgument, "need at least two classes");
}

void CorruptionConfig::validate() const {
  if (!(alpha > 0.0) || !(beta > 0.0) || !std::isfinite(alpha) || !std::isfinite(beta)) {
    throw Error(ErrorCode::kInvalidArgument, "Beta corruption parameters must be positive");
  }
}

double sample_beta(double alpha, double beta, std::mt19937_64& rng) {
  std::gamma_distribution<double> ga(alpha, 1.0);
  std::gamma_distribution<double> gb(beta, 1.0);
  const double a = ga(rng);
  const double b = gb(rng);
  return a + b > 0.0 ? a / (a + b) : 0.5;
}

MaskVector corrupt_with_probability(const MaskVector& initial, double p, std::mt19937_64& rng) {
  if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::kInvalidArgument, "missing probability outside [0, 1]");
  MaskVector mask = initial;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (auto& k : mask) {
    // Always consume a draw so the stream does not depend on the initial mask.
    const double u = unit(rng);
    if (k && u < p) k = 0;
  }
  return mask;
}

MaskVector beta_corrupt(const MaskVector& initial, const CorruptionConfig& config, std::mt19937_64& rng) {
  config.validate();
  return corrupt_with_probability(initial, sample_beta(config.alpha, config.beta, rng), rng);
}

Network build_autoencoder(const ArchitectureSpec& arch, std::mt19937_64& rng) {
  arch.validate();
  std::vector<int> widths = arch.encoder;
  widths.insert(widths.end(), arch.encoder.rbegin() + 1, arch.encoder.rend());
  std::vector<Activation> activations(widths.size() - 1, Activation::kRelu);
  activations.back() = Activation::kSigmoid;
  return Network::dense(widths, activations, rng);
}

namespace {

Eigen::MatrixXd encode_all(const Dataset& ds, int bits) {
  const auto d = ds.num_features();
  const MaskVector known = all_known(d);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(d) * bits, static_cast<Eigen::Index>(ds.num_instances()));
  for (Eigen::Index i = 0; i < out.cols(); ++i) {
    const Eigen::VectorXd row = ds.features.row(i).transpose();
    quantize_into(row, known, bits, out.col(i));
  }
  return out;
}

void zero_unknown_words(Eigen::Ref<Eigen::VectorXd> column, const MaskVector& mask, int bits) {
  for (std::size_t j = 0; j < mask.size(); ++j) {
    if (!mask[j]) column.segment(static_cast<Eigen::Index>(j) * bits, bits).setZero();
  }
}

/// Corrupted copies of `full` with one fresh Beta mask per column.
Eigen::MatrixXd corrupt_columns(const Eigen::MatrixXd& full, std::span<const std::size_t> columns,
                                std::size_t features, int bits, const CorruptionConfig& corruption,
                                std::mt19937_64& rng) {
  Eigen::MatrixXd out(full.rows(), static_cast<Eigen::Index>(columns.size()));
  const MaskVector known = all_known(features);
  for (std::size_t c = 0; c < columns.size(); ++c) {
    out.col(static_cast<Eigen::Index>(c)) = full.col(static_cast<Eigen::Index>(columns[c]));
    zero_unknown_words(out.col(static_cast<Eigen::Index>(c)), beta_corrupt(known, corruption, rng), bits);
  }
  return out;
}

std::vector<std::size_t> iota_vector(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

void check_inputs(const Dataset& train, const Dataset& validation, const ArchitectureSpec& arch,
                  const TrainConfig& config) {
  arch.validate();
  config.optimizer.validate();
  if (train.num_instances() == 0 || validation.num_instances() == 0) {
    throw Error(ErrorCode::kEmptySplit, "training needs non-empty train and validation splits");
  }
  if (train.num_features() != arch.num_features() || validation.num_features() != arch.num_features()) {
    throw Error(ErrorCode::kDimensionMismatch, "dataset width does not match the architecture input");
  }
  if (config.batch_size < 1 || config.max_epochs < 1 || config.patience < 1) {
    throw Error(ErrorCode::kInvalidArgument, "batch size, epochs and patience must be positive");
  }
}

// Constant offsets keep the independent random streams apart.
constexpr std::uint64_t kValidationStream = 0x9e3779b97f4a7c15ULL;
constexpr std::uint64_t kPredictorStream = 0xbf58476d1ce4e5b9ULL;

}  // namespace

Network train_autoencoder(const Dataset& train, const Dataset& validation, const ArchitectureSpec& arch,
                          const CorruptionConfig& corruption, const TrainConfig& config, TrainingLog* log) {
  check_inputs(train, validation, arch, config);
  corruption.validate();
  const int bits = arch.bits;
  const std::size_t d = arch.num_features();

  std::mt19937_64 init_rng(config.seed);
  Network net = build_autoencoder(arch, init_rng);
  AdamState adam(net);

  const Eigen::MatrixXd train_full = encode_all(train, bits);
  const Eigen::MatrixXd val_full = encode_all(validation, bits);
  std::mt19937_64 val_rng(corruption.seed ^ kValidationStream);
  const auto val_columns = iota_vector(validation.num_instances());
  const Eigen::MatrixXd val_input = corrupt_columns(val_full, val_columns, d, bits, corruption, val_rng);

  const auto validation_loss = [&] {
    const ForwardCache cache = forward_batch(net, val_input);
    return weighted_bit_xent_batch(val_full, cache.output(), bits);
  };

  std::mt19937_64 shuffle_rng(config.seed ^ kPredictorStream);
  std::mt19937_64 mask_rng(corruption.seed);
  std::vector<std::size_t> order = iota_vector(train.num_instances());

  double best = validation_loss();
  Network best_net = net;
  int since_best = 0;
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const auto count = std::min(order.size() - start, static_cast<std::size_t>(config.batch_size));
      const std::span<const std::size_t> idx(order.data() + start, count);
      const Eigen::MatrixXd input = corrupt_columns(train_full, idx, d, bits, corruption, mask_rng);
      Eigen::MatrixXd target(train_full.rows(), static_cast<Eigen::Index>(count));
      for (std::size_t c = 0; c < count; ++c) {
        target.col(static_cast<Eigen::Index>(c)) = train_full.col(static_cast<Eigen::Index>(idx[c]));
      }
      const ForwardCache cache = forward_batch(net, input);
      Eigen::MatrixXd grad;
      const double loss = weighted_bit_xent_batch(target, cache.output(), bits, &grad);
      if (!std::isfinite(loss)) {
        throw Error(ErrorCode::kDivergence, "autoencoder loss became non-finite at epoch " + std::to_string(epoch));
      }
      adam_step(net, backward(net, cache, grad, GradientSite::kPreActivation), config.optimizer, adam);
      epoch_loss += loss;
      ++batches;
    }
    const double val = validation_loss();
    if (!std::isfinite(val)) {
      throw Error(ErrorCode::kDivergence, "autoencoder validation loss became non-finite");
    }
    if (val < best) {
      best = val;
      best_net = net;
      since_best = 0;
    } else {
      ++since_best;
    }
    if (log) log->autoencoder.push_back({epoch, epoch_loss / static_cast<double>(batches), val, best});
    if (since_best >= config.patience) break;
  }
  return best_net;
}

ModelBundle train_predictor(const Network& autoencoder, const Dataset& train, const Dataset& validation,
                            const ArchitectureSpec& arch, const CorruptionConfig& corruption,
                            const TrainConfig& config, TrainingLog* log) {
  check_inputs(train, validation, arch, config);
  corruption.validate();
  const std::size_t enc_depth = arch.encoder_depth();
  if (autoencoder.depth() != 2 * enc_depth || autoencoder.input_width() != arch.encoder.front()) {
    throw Error(ErrorCode::kDimensionMismatch, "autoencoder does not match the architecture");
  }
  for (std::size_t k = 0; k < enc_depth; ++k) {
    if (autoencoder.layers()[k].outputs() != arch.encoder[k + 1]) {
      throw Error(ErrorCode::kDimensionMismatch, "autoencoder layer widths do not match the architecture");
    }
  }

  const int bits = arch.bits;
  const std::size_t d = arch.num_features();

  std::vector<Layer> layers(autoencoder.layers().begin(),
                            autoencoder.layers().begin() + static_cast<std::ptrdiff_t>(enc_depth));
  for (auto& layer : layers) layer.lr_multiplier = config.encoder_lr_multiplier;
  std::vector<int> head_widths{arch.code_width()};
  head_widths.insert(head_widths.end(), arch.predictor.begin(), arch.predictor.end());
  head_widths.push_back(arch.classes);
  std::vector<Activation> head_acts(head_widths.size() - 1, Activation::kRelu);
  head_acts.back() = Activation::kSoftmax;
  std::mt19937_64 init_rng(config.seed ^ kPredictorStream);
  const Network head = Network::dense(head_widths, head_acts, init_rng);
  layers.insert(layers.end(), head.layers().begin(), head.layers().end());
  Network net(std::move(layers));
  AdamState adam(net);

  const Eigen::MatrixXd train_full = encode_all(train, bits);
  const Eigen::MatrixXd val_full = encode_all(validation, bits);
  std::mt19937_64 val_rng(corruption.seed ^ kValidationStream);
  const auto val_columns = iota_vector(validation.num_instances());
  const Eigen::MatrixXd val_input = corrupt_columns(val_full, val_columns, d, bits, corruption, val_rng);

  const auto validation_accuracy = [&] {
    const ForwardCache cache = forward_batch(net, val_input);
    std::size_t correct = 0;
    for (Eigen::Index c = 0; c < cache.output().cols(); ++c) {
      Eigen::Index arg = 0;
      cache.output().col(c).maxCoeff(&arg);
      if (static_cast<int>(arg) == validation.targets[static_cast<std::size_t>(c)]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(validation.num_instances());
  };

  std::mt19937_64 shuffle_rng(config.seed ^ kValidationStream);
  std::mt19937_64 mask_rng(corruption.seed ^ kPredictorStream);
  std::vector<std::size_t> order = iota_vector(train.num_instances());

  double best = validation_accuracy();
  Network best_net = net;
  int since_best = 0;
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const auto count = std::min(order.size() - start, static_cast<std::size_t>(config.batch_size));
      const std::span<const std::size_t> idx(order.data() + start, count);
      const Eigen::MatrixXd input = corrupt_columns(train_full, idx, d, bits, corruption, mask_rng);
      const ForwardCache cache = forward_batch(net, input);
      Eigen::MatrixXd grad = cache.output();
      double loss = 0.0;
      for (std::size_t c = 0; c < count; ++c) {
        const auto col = static_cast<Eigen::Index>(c);
        const int label = train.targets[idx[c]];
        loss -= std::log(std::max(grad(label, col), 1e-300));
        grad(label, col) -= 1.0;
      }
      grad /= static_cast<double>(count);
      loss /= static_cast<double>(count);
      if (!std::isfinite(loss)) {
        throw Error(ErrorCode::kDivergence, "predictor loss became non-finite at epoch " + std::to_string(epoch));
      }
      adam_step(net, backward(net, cache, grad, GradientSite::kPreActivation), config.optimizer, adam);
      epoch_loss += loss;
      ++batches;
    }
    const double val = validation_accuracy();
    if (val > best) {
      best = val;
      best_net = net;
      since_best = 0;
    } else {
      ++since_best;
    }
    if (log) log->predictor.push_back({epoch, epoch_loss / static_cast<double>(batches), val, best});
    if (since_best >= config.patience) break;
  }

  ModelBundle bundle;
  bundle.autoencoder = autoencoder;
  bundle.predictor = std::move(best_net);
  bundle.architecture = arch;
  bundle.corruption = corruption;
  bundle.feature_names = train.feature_names;
  bundle.class_names = train.class_names;
  return bundle;
}

ModelBundle train_model(const TrainingInputs& inputs, const ArchitectureSpec& arch,
                        const CorruptionConfig& corruption, const TrainConfig& config, TrainingLog* log) {
  if (inputs.costs.num_features() != arch.num_features()) {
    throw Error(ErrorCode::kDimensionMismatch, "cost schedule width does not match the architecture");
  }
  const Network autoencoder = train_autoencoder(inputs.train, inputs.validation, arch, corruption, config, log);
  ModelBundle bundle =
      train_predictor(autoencoder, inputs.train, inputs.validation, arch, corruption, config, log);
  bundle.normalization = inputs.normalization;
  bundle.costs = inputs.costs;
  bundle.dataset_fingerprint = inputs.dataset_fingerprint;
  return bundle;
}

namespace {

void require_trained(const ModelBundle& bundle) {
  if (!bundle.trained()) throw Error(ErrorCode::kInvalidArgument, "model bundle is not trained");
}

}  // namespace

BitMatrix reconstruct_probabilities(const ModelBundle& bundle, const Eigen::Ref<const Eigen::VectorXd>& x,
                                    const MaskVector& known) {
  require_trained(bundle);
  const BitMatrix input = quantize(x, known, bundle.bits());
  return BitMatrix(forward(bundle.autoencoder, input.flat()), bundle.bits());
}

Eigen::VectorXd predict(const ModelBundle& bundle, const Eigen::Ref<const Eigen::VectorXd>& x,
                        const MaskVector& known) {
  require_trained(bundle);
  return forward(bundle.predictor, quantize(x, known, bundle.bits()).flat());
}

double denoising_percentage(const ModelBundle& bundle, const Dataset& test, const CorruptionConfig& evaluation) {
  require_trained(bundle);
  if (test.num_instances() == 0) throw Error(ErrorCode::kEmptySplit, "denoising percentage on an empty split");
  std::mt19937_64 rng(evaluation.seed);
  const auto d = test.num_features();
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t i = 0; i < test.num_instances(); ++i) {
    const Eigen::VectorXd complete = test.features.row(static_cast<Eigen::Index>(i)).transpose();
    const MaskVector mask = beta_corrupt(all_known(d), evaluation, rng);
    Eigen::VectorXd observed = complete;
    for (std::size_t j = 0; j < d; ++j) {
      if (!mask[j]) observed[static_cast<Eigen::Index>(j)] = 0.0;
    }
    const double before = (observed - complete).norm();
    if (before == 0.0) continue;
    const Eigen::VectorXd reconstructed = dequantize(reconstruct_probabilities(bundle, observed, mask));
    const double after = (reconstructed - complete).norm();
    total += 100.0 * (before - after) / before;
    ++counted;
  }
  return counted ? total / static_cast<double>(counted) : 0.0;
}

double full_feature_accuracy(const ModelBundle& bundle, const Dataset& test) {
  require_trained(bundle);
  if (test.num_instances() == 0) throw Error(ErrorCode::kEmptySplit, "accuracy on an empty split");
  const MaskVector known = all_known(test.num_features());
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test.num_instances(); ++i) {
    const Eigen::VectorXd y = predict(bundle, test.features.row(static_cast<Eigen::Index>(i)).transpose(), known);
    Eigen::Index arg = 0;
    y.maxCoeff(&arg);
    if (static_cast<int>(arg) == test.targets[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test.num_instances());
}

// ---------------------------------------------------------------------------
// Persistence

json bundle_manifest(const ModelBundle& bundle) {
  json costs;
  costs["feature_costs"] = bundle.costs.feature_costs();
  costs["groups"] = json::array();
  for (const auto& g : bundle.costs.groups()) {
    costs["groups"].push_back({{"id", g.id}, {"cost", g.cost}, {"members", g.members}});
  }
  char fingerprint[17];
  std::snprintf(fingerprint, sizeof fingerprint, "%016llx",
                static_cast<unsigned long long>(bundle.dataset_fingerprint));
  return {
      {"version", 1},
      {"architecture",
       {{"encoder", bundle.architecture.encoder},
        {"predictor", bundle.architecture.predictor},
        {"bits", bundle.architecture.bits},
        {"classes", bundle.architecture.classes}}},
      {"normalization",
       {{"min", bundle.normalization.min},
        {"max", bundle.normalization.max},
        {"computed_on", bundle.normalization.computed_on},
        {"bits", bundle.normalization.bits}}},
      {"costs", costs},
      {"corruption",
       {{"alpha", bundle.corruption.alpha}, {"beta", bundle.corruption.beta}, {"seed", bundle.corruption.seed}}},
      {"feature_names", bundle.feature_names},
      {"class_names", bundle.class_names},
      {"dataset_fingerprint", fingerprint},
  };
}

void save_bundle(const ModelBundle& bundle, const std::filesystem::path& dir) {
  require_trained(bundle);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create " + dir.string() + ": " + ec.message());
  save_network(bundle.autoencoder, dir / "autoencoder.json");
  save_network(bundle.predictor, dir / "predictor.json");
  std::ofstream out(dir / "manifest.json");
  if (!out) throw Error(ErrorCode::kIo, "cannot write bundle manifest in " + dir.string());
  out << bundle_manifest(bundle).dump(2) << '\n';
  if (!out) throw Error(ErrorCode::kIo, "failed writing bundle manifest in " + dir.string());
}

ModelBundle load_bundle(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw Error(ErrorCode::kIo, "no bundle manifest in " + dir.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, "bundle manifest: " + std::string(e.what()));
  }
  ModelBundle bundle;
  try {
    if (doc.at("version").get<int>() != 1) throw Error(ErrorCode::kParse, "unsupported bundle version");
    const auto& arch = doc.at("architecture");
    bundle.architecture.encoder = arch.at("encoder").get<std::vector<int>>();
    bundle.architecture.predictor = arch.at("predictor").get<std::vector<int>>();
    bundle.architecture.bits = arch.at("bits").get<int>();
    bundle.architecture.classes = arch.at("classes").get<int>();
    bundle.architecture.validate();
    const auto& norm = doc.at("normalization");
    bundle.normalization.min = norm.at("min").get<std::vector<double>>();
    bundle.normalization.max = norm.at("max").get<std::vector<double>>();
    bundle.normalization.computed_on = norm.at("computed_on").get<std::string>();
    bundle.normalization.bits = norm.at("bits").get<int>();
    bundle.feature_names = doc.at("feature_names").get<std::vector<std::string>>();
    bundle.class_names = doc.at("class_names").get<std::vector<std::string>>();
    std::vector<FeatureGroup> groups;
    for (const auto& g : doc.at("costs").at("groups")) {
      groups.push_back({g.at("id").get<std::string>(), g.at("cost").get<double>(),
                        g.at("members").get<std::vector<std::size_t>>()});
    }
    bundle.costs = CostSchedule(doc.at("costs").at("feature_costs").get<std::vector<double>>(),
                                std::move(groups), bundle.feature_names);
    const auto& corruption = doc.at("corruption");
    bundle.corruption = {corruption.at("alpha").get<double>(), corruption.at("beta").get<double>(),
                         corruption.at("seed").get<std::uint64_t>()};
    bundle.dataset_fingerprint = std::stoull(doc.at("dataset_fingerprint").get<std::string>(), nullptr, 16);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, "bundle manifest: " + std::string(e.what()));
  }
  bundle.autoencoder = load_network(dir / "autoencoder.json");
  bundle.predictor = load_network(dir / "predictor.json");
  if (bundle.predictor.input_width() != bundle.architecture.encoder.front() ||
      bundle.autoencoder.input_width() != bundle.architecture.encoder.front() ||
      bundle.costs.num_features() != bundle.num_features()) {
    throw Error(ErrorCode::kDimensionMismatch, "bundle files disagree with the manifest architecture");
  }
  return bundle;
}

}  // namespace fact
