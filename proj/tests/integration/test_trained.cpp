// SPDX-License-Identifier: Apache-2.0
// Behavioral checks against a model trained once on a small synthesized set.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "fact/baselines.hpp"
#include "fact/cli.hpp"
#include "fact/eval.hpp"
#include "fact/service.hpp"

#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

using namespace fact;
using nlohmann::json;

namespace {

struct Trained {
  RunConfig config;
  PreparedData data;
  ModelBundle bundle;
};

const Trained& trained() {
  static const Trained t = [] {
    json cfg = default_config();
    cfg["seed"] = 7;
    cfg["data"]["synth"]["centers"] = 8;
    cfg["data"]["synth"]["informative_features"] = 8;
    cfg["data"]["synth"]["noise_features"] = 8;
    cfg["data"]["synth"]["points_per_center"] = 500;
    // Wider center spread so classes separate with eight informative features.
    cfg["data"]["synth"]["center_low"] = -1.0;
    cfg["training"]["max_epochs"] = 80;
    Trained out;
    out.config = RunConfig::from_json(cfg);
    out.data = prepare_data(out.config);
    out.bundle = train_model(out.data.inputs, architecture_for(out.config, out.data), out.config.corruption,
                             out.config.training);
    return out;
  }();
  return t;
}

std::vector<int> codes(const Dataset& ds, std::size_t j) {
  std::vector<double> col(ds.num_instances());
  for (std::size_t i = 0; i < col.size(); ++i) col[i] = ds.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  return quantile_bins(col, 10);
}

}  // namespace

TEST_CASE("the trained predictor beats chance with full information") {
  const auto& t = trained();
  CHECK(full_feature_accuracy(t.bundle, t.data.test) > 0.6);
}

TEST_CASE("the autoencoder reconstructs a fully observed training point") {
  const auto& t = trained();
  const auto& train = t.data.inputs.train;
  const std::size_t d = train.num_features();
  double best = 1.0;
  for (Eigen::Index i = 0; i < 200; ++i) {
    const Eigen::VectorXd x = train.features.row(i).transpose();
    const auto rec = reconstruct_probabilities(t.bundle, x, all_known(d));
    best = std::min(best, (dequantize(rec) - x).cwiseAbs().maxCoeff());
  }
  CHECK(best < 0.1);
}

TEST_CASE("initial context moves the prediction") {
  const auto& t = trained();
  const std::size_t d = t.bundle.num_features();
  const AcquisitionSession empty(t.bundle);
  int moved = 0;
  for (Eigen::Index i = 0; i < 50; ++i) {
    MaskVector known = all_unknown(d);
    for (std::size_t j = 0; j < 4; ++j) known[j] = 1;
    const AcquisitionSession s(t.bundle, known, t.data.test.features.row(i).transpose());
    if ((s.prediction() - empty.prediction()).lpNorm<1>() > 1e-3) ++moved;
  }
  CHECK(moved >= 45);
}

TEST_CASE("the next choice depends on the observed values, not only the mask") {
  const auto& t = trained();
  const std::size_t d = t.bundle.num_features();
  MaskVector known = all_unknown(d);
  known[0] = known[1] = 1;
  std::set<std::size_t> choices;
  for (Eigen::Index i = 0; i < 100; ++i) {
    const AcquisitionSession s(t.bundle, known, t.data.test.features.row(i).transpose());
    choices.insert(select_next(score_features(t.bundle, s)));
  }
  CHECK(choices.size() >= 2);
}

TEST_CASE("more random context gives higher accuracy") {
  const auto& t = trained();
  const auto& test = t.data.test;
  REQUIRE(test.num_instances() >= 500);
  const std::size_t d = t.bundle.num_features();
  std::mt19937_64 rng(5);
  std::vector<std::size_t> idx(d);
  std::iota(idx.begin(), idx.end(), 0);
  const auto accuracy_with = [&](std::size_t k) {
    int correct = 0;
    for (std::size_t i = 0; i < test.num_instances(); ++i) {
      std::shuffle(idx.begin(), idx.end(), rng);
      MaskVector known = all_unknown(d);
      for (std::size_t j = 0; j < k; ++j) known[idx[j]] = 1;
      const Eigen::VectorXd x = test.features.row(static_cast<Eigen::Index>(i)).transpose();
      Eigen::Index cls;
      predict(t.bundle, x, known).maxCoeff(&cls);
      correct += cls == test.targets[i] ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(test.num_instances());
  };
  const double quarter = accuracy_with(d / 4);
  const double three_quarters = accuracy_with(3 * d / 4);
  INFO("25% known " << quarter << ", 75% known " << three_quarters);
  CHECK(three_quarters > quarter);
}

TEST_CASE("posting the top suggestion through the service changes the prediction") {
  const auto& t = trained();
  SessionService service(t.bundle);
  int changed = 0;
  for (Eigen::Index i = 0; i < 20; ++i) {
    const auto created = service.create_session(json::object());
    REQUIRE(created.status == 201);
    const std::string id = created.body.at("id");
    const double before = created.body.at("prediction").at("top_probability");
    const auto top = service.get_suggestion(id).body.at("candidates").at(0);
    const std::size_t unit = top.at("unit");
    const std::size_t j = t.bundle.costs.units()[unit].members.front();
    const double raw = t.bundle.normalization.denormalize_value(j, t.data.test.features(i, static_cast<Eigen::Index>(j)));
    const auto posted = service.post_feature(id, {{"id", top.at("id")}, {"value", raw}});
    REQUIRE(posted.status == 200);
    if (std::abs(posted.body.at("prediction").at("top_probability").get<double>() - before) > 1e-6) ++changed;
  }
  CHECK(changed >= 18);
}

TEST_CASE("noise features carry no more label information than a permutation null") {
  const auto& t = trained();
  const auto& train = t.data.inputs.train;
  const std::size_t informative = static_cast<std::size_t>(t.config.synth.informative_features);
  std::mt19937_64 rng(11);
  std::vector<int> shuffled = train.targets;
  const int permutations = 500;
  for (std::size_t j = 0; j < train.num_features(); ++j) {
    const auto c = codes(train, j);
    const double observed = mutual_information(c, train.targets);
    double null_max = 0.0;
    for (int p = 0; p < permutations; ++p) {
      std::shuffle(shuffled.begin(), shuffled.end(), rng);
      null_max = std::max(null_max, mutual_information(c, shuffled));
    }
    INFO("feature " << j << " mi " << observed << " null max " << null_max);
    if (j < informative) {
      CHECK(observed > null_max);
    } else {
      CHECK(observed <= null_max);
    }
  }
}
