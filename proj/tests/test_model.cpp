// SPDX-License-Identifier: Apache-2.0
#include "fact/error.hpp"
#include "fact/model.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace fact;

namespace {

/// Two features on a coarse grid; the label is whether their sum exceeds 0.5.
Dataset grid_dataset(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> level(0, 3);
  Dataset ds;
  ds.features.resize(static_cast<Eigen::Index>(n), 2);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    ds.features(r, 0) = level(rng) * 0.25;
    ds.features(r, 1) = level(rng) * 0.25;
    ds.targets.push_back(ds.features(r, 0) + ds.features(r, 1) > 0.5 ? 1 : 0);
  }
  ds.feature_names = {"a", "b"};
  ds.class_names = {"0", "1"};
  return ds;
}

TrainingInputs inputs_for(const Dataset& train, const Dataset& validation) {
  TrainingInputs in;
  in.normalization.min.assign(train.num_features(), 0.0);
  in.normalization.max.assign(train.num_features(), 1.0);
  in.train = in.normalization.apply(train);
  in.validation = in.normalization.apply(validation);
  in.costs = CostSchedule(std::vector<double>(train.num_features(), 1.0), {}, train.feature_names);
  in.dataset_fingerprint = fingerprint(train);
  return in;
}

}  // namespace

TEST_CASE("beta sampling has the Beta mean") {
  std::mt19937_64 rng(4);
  for (auto [a, b] : {std::pair{1.5, 1.5}, std::pair{5.5, 1.5}, std::pair{3.5, 1.5}}) {
    double sum = 0.0;
    const int n = 40000;
    for (int i = 0; i < n; ++i) sum += sample_beta(a, b, rng);
    CHECK(sum / n == doctest::Approx(a / (a + b)).epsilon(0.01));
    CHECK(CorruptionConfig{a, b, 0}.mean_missing() == doctest::Approx(a / (a + b)));
  }
}

TEST_CASE("corruption keeps unknown features unknown") {
  std::mt19937_64 rng(2);
  const MaskVector initial{1, 0, 1, 0, 1, 1};
  CHECK(corrupt_with_probability(initial, 0.0, rng) == initial);
  CHECK(corrupt_with_probability(initial, 1.0, rng) == all_unknown(6));
  for (int t = 0; t < 200; ++t) {
    const auto m = beta_corrupt(initial, {1.5, 1.5, 0}, rng);
    CHECK(m[1] == 0);
    CHECK(m[3] == 0);
  }
  CHECK_THROWS_AS(corrupt_with_probability(initial, 1.5, rng), Error);
  CHECK_THROWS_AS(beta_corrupt(initial, {0.0, 1.5, 0}, rng), Error);
}

TEST_CASE("beta corruption is unbiased across features (chi-square)") {
  std::mt19937_64 rng(31);
  const std::size_t d = 20;
  const int draws = 5000;
  std::vector<double> missing(d, 0.0);
  for (int t = 0; t < draws; ++t) {
    const auto m = beta_corrupt(all_known(d), {1.5, 1.5, 0}, rng);
    for (std::size_t j = 0; j < d; ++j) missing[j] += m[j] ? 0.0 : 1.0;
  }
  double total = 0.0;
  for (double c : missing) total += c;
  const double expected = total / d;
  double chi2 = 0.0;
  for (double c : missing) chi2 += (c - expected) * (c - expected) / expected;
  // Critical value of chi-square with 19 degrees of freedom at p = 0.01.
  CHECK(chi2 < 36.19);
  CHECK(total / (d * draws) == doctest::Approx(0.5).epsilon(0.03));
}

TEST_CASE("autoencoder widths mirror the encoder") {
  std::mt19937_64 rng(0);
  const auto arch = ArchitectureSpec::make(64, {16, 10}, {8, 4}, 2);
  CHECK(arch.encoder == std::vector<int>{512, 16, 10});
  CHECK(arch.num_features() == 64);
  CHECK(arch.code_width() == 10);
  const auto ae = build_autoencoder(arch, rng);
  REQUIRE(ae.depth() == 4);
  CHECK(ae.layers()[0].outputs() == 16);
  CHECK(ae.layers()[1].outputs() == 10);
  CHECK(ae.layers()[2].outputs() == 16);
  CHECK(ae.layers()[3].outputs() == 512);
  CHECK(ae.layers()[3].activation == Activation::kSigmoid);
  CHECK(ae.layers()[1].activation == Activation::kRelu);
  CHECK_THROWS_AS(ArchitectureSpec::make(4, {}, {}, 2), Error);
  CHECK_THROWS_AS(ArchitectureSpec::make(4, {3}, {}, 1), Error);
}

TEST_CASE("without corruption the autoencoder learns to reproduce representable inputs") {
  const auto train = grid_dataset(2000, 1);
  const auto validation = grid_dataset(300, 2);
  const auto in = inputs_for(train, validation);
  const auto arch = ArchitectureSpec::make(2, {32, 16}, {8}, 2);
  TrainConfig cfg;
  cfg.seed = 3;
  cfg.max_epochs = 150;
  TrainingLog log;
  const auto ae = train_autoencoder(in.train, in.validation, arch, {1e-3, 1e3, 3}, cfg, &log);
  REQUIRE_FALSE(log.autoencoder.empty());
  CHECK(log.autoencoder.back().best_validation < log.autoencoder.front().validation);
  for (std::size_t e = 1; e < log.autoencoder.size(); ++e) {
    CHECK(log.autoencoder[e].best_validation <= log.autoencoder[e - 1].best_validation);
  }
  double worst = 0.0;
  for (Eigen::Index i = 0; i < 50; ++i) {
    const Eigen::VectorXd x = in.validation.features.row(i).transpose();
    const BitMatrix rec(forward(ae, quantize(x, all_known(2)).flat()), 8);
    worst = std::max(worst, (dequantize(rec) - x).cwiseAbs().maxCoeff());
  }
  CHECK(worst < 0.05);
}

TEST_CASE("fine-tuning never touches the frozen autoencoder") {
  const auto train = grid_dataset(600, 5);
  const auto validation = grid_dataset(200, 6);
  const auto in = inputs_for(train, validation);
  const auto arch = ArchitectureSpec::make(2, {16, 8}, {6}, 2);
  TrainConfig cfg;
  cfg.seed = 9;
  cfg.max_epochs = 20;
  const auto ae = train_autoencoder(in.train, in.validation, arch, {1.5, 1.5, 9}, cfg);
  const Network snapshot = ae;
  const auto bundle = train_predictor(ae, in.train, in.validation, arch, {1.5, 1.5, 9}, cfg);
  CHECK(bundle.autoencoder == snapshot);
  CHECK(ae == snapshot);
  REQUIRE(bundle.predictor.depth() == 4);
  CHECK(bundle.predictor.layers()[0].lr_multiplier == 0.1);
  CHECK(bundle.predictor.layers()[1].lr_multiplier == 0.1);
  CHECK(bundle.predictor.layers()[2].lr_multiplier == 1.0);
  CHECK(bundle.predictor.layers()[3].activation == Activation::kSoftmax);
  CHECK(bundle.predictor.input_width() == 16);
  // The fine-tuned encoder moved away from the frozen one.
  CHECK_FALSE(bundle.predictor.layers()[0] == snapshot.layers()[0]);
}

TEST_CASE("with no context the predictor falls back to the majority class") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto make = [&](std::size_t n) {
    Dataset ds;
    ds.features.resize(static_cast<Eigen::Index>(n), 3);
    for (std::size_t i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < 3; ++j) ds.features(static_cast<Eigen::Index>(i), j) = u(rng);
      ds.targets.push_back(i % 10 == 0 ? 1 : 0);
    }
    ds.feature_names = {"a", "b", "c"};
    ds.class_names = {"0", "1"};
    return ds;
  };
  const auto in = inputs_for(make(1000), make(200));
  TrainConfig cfg;
  cfg.seed = 4;
  cfg.max_epochs = 30;
  const auto bundle = train_model(in, ArchitectureSpec::make(3, {8, 4}, {4}, 2), {1.5, 1.5, 4}, cfg);
  const Eigen::VectorXd p = predict(bundle, Eigen::VectorXd::Zero(3), all_unknown(3));
  CHECK(p[0] > p[1]);
  CHECK(p.sum() == doctest::Approx(1.0));
}

TEST_CASE("train_model fills every bundle field and the bundle round-trips") {
  const auto train = grid_dataset(500, 7);
  const auto validation = grid_dataset(150, 8);
  const auto in = inputs_for(train, validation);
  TrainConfig cfg;
  cfg.seed = 1;
  cfg.max_epochs = 15;
  TrainingLog log;
  const auto bundle = train_model(in, ArchitectureSpec::make(2, {16, 8}, {6}, 2), {2.0, 3.0, 1}, cfg, &log);
  CHECK(bundle.trained());
  CHECK(bundle.num_features() == 2);
  CHECK(bundle.num_classes() == 2);
  CHECK(bundle.dataset_fingerprint == in.dataset_fingerprint);
  CHECK(bundle.corruption.alpha == 2.0);
  CHECK(bundle.feature_names == train.feature_names);
  CHECK_FALSE(log.predictor.empty());

  const auto dir = testing::temp_dir("bundle");
  save_bundle(bundle, dir);
  const auto back = load_bundle(dir);
  CHECK(back.autoencoder == bundle.autoencoder);
  CHECK(back.predictor == bundle.predictor);
  CHECK(back.dataset_fingerprint == bundle.dataset_fingerprint);
  CHECK(back.normalization.min == bundle.normalization.min);
  CHECK(back.costs.total_cost() == bundle.costs.total_cost());
  CHECK(back.architecture.encoder == bundle.architecture.encoder);
  const Eigen::Vector2d x(0.25, 0.5);
  CHECK(predict(back, x, all_known(2)) == predict(bundle, x, all_known(2)));
  CHECK(bundle_manifest(back) == bundle_manifest(bundle));
}

TEST_CASE("reconstruction probabilities stay inside the sigmoid range") {
  const auto bundle = testing::random_bundle(5, 3, 21);
  std::mt19937_64 rng(0);
  for (int t = 0; t < 20; ++t) {
    const auto x = testing::random_values(5, rng);
    MaskVector k(5);
    for (auto& v : k) v = static_cast<std::uint8_t>(rng() & 1);
    const auto rec = reconstruct_probabilities(bundle, x, k);
    CHECK(rec.flat().minCoeff() > 0.0);
    CHECK(rec.flat().maxCoeff() < 1.0);
  }
  ModelBundle empty;
  CHECK_THROWS_AS(reconstruct_probabilities(empty, Eigen::VectorXd::Zero(5), all_known(5)), Error);
}

TEST_CASE("training rejects inconsistent inputs") {
  const auto train = grid_dataset(100, 1);
  const auto in = inputs_for(train, grid_dataset(50, 2));
  TrainConfig cfg;
  cfg.max_epochs = 1;
  CHECK_THROWS_AS(train_model(in, ArchitectureSpec::make(3, {4}, {}, 2), {1.5, 1.5, 0}, cfg), Error);
  TrainingInputs empty = in;
  empty.validation = train.subset(std::vector<std::size_t>{});
  CHECK_THROWS_AS(train_model(empty, ArchitectureSpec::make(2, {4}, {}, 2), {1.5, 1.5, 0}, cfg), Error);
}
