// SPDX-License-Identifier: Apache-2.0
// Randomized invariant checks of the acquisition criterion and session state.
// Each returns an empty string on success, otherwise the first violation.
#pragma once

#include "fact/acquire.hpp"
#include "fact/service.hpp"
#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>

namespace fact::testing {

/// Random positive costs; with probability 1/2 one random group of 2-3 features.
inline CostSchedule random_costs(std::size_t d, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> cost(0.5, 20.0);
  std::vector<double> c(d);
  for (auto& v : c) v = cost(rng);
  std::vector<std::string> names;
  for (std::size_t j = 0; j < d; ++j) names.push_back("f" + std::to_string(j));
  std::vector<FeatureGroup> groups;
  if (d >= 4 && (rng() & 1)) {
    std::vector<std::size_t> idx(d);
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    const std::size_t size = 2 + rng() % 2;
    groups.push_back({"g", cost(rng), std::vector<std::size_t>(idx.begin(), idx.begin() + size)});
  }
  return CostSchedule(std::move(c), std::move(groups), std::move(names));
}

/// Random unit-consistent known mask and values.
inline std::pair<MaskVector, Eigen::VectorXd> random_context(const CostSchedule& costs, std::mt19937_64& rng) {
  MaskVector known(costs.num_features(), 0);
  std::bernoulli_distribution coin(0.4);
  for (const auto& unit : costs.units()) {
    if (coin(rng)) {
      for (std::size_t m : unit.members) known[m] = 1;
    }
  }
  if (std::all_of(known.begin(), known.end(), [](auto k) { return k != 0; })) {
    for (std::size_t m : costs.units().back().members) known[m] = 0;
  }
  return {known, random_values(costs.num_features(), rng)};
}

inline ModelBundle random_costed_bundle(std::mt19937_64& rng) {
  const std::size_t d = 4 + rng() % 9;
  const int classes = 2 + static_cast<int>(rng() % 3);
  return random_bundle(d, classes, rng(), random_costs(d, rng));
}

inline std::string check_cost_scaling_invariance(std::mt19937_64& rng, int trials) {
  std::uniform_real_distribution<double> log_scale(std::log(0.01), std::log(100.0));
  for (int t = 0; t < trials; ++t) {
    ModelBundle bundle = random_costed_bundle(rng);
    const auto [known, values] = random_context(bundle.costs, rng);
    const AcquisitionSession session(bundle, known, values);
    const std::size_t chosen = select_next(score_features(bundle, session));
    const double k = std::exp(log_scale(rng));
    bundle.costs = bundle.costs.scaled(k);
    const std::size_t scaled = select_next(score_features(bundle, session));
    if (chosen != scaled) {
      std::ostringstream os;
      os << "trial " << t << ": scaling costs by " << k << " moved the argmax from " << chosen << " to " << scaled;
      return os.str();
    }
  }
  return {};
}

inline std::string check_known_exclusion(std::mt19937_64& rng, int trials) {
  for (int t = 0; t < trials; ++t) {
    const ModelBundle bundle = random_costed_bundle(rng);
    const auto [known, values] = random_context(bundle.costs, rng);
    AcquisitionSession session(bundle, known, values);
    while (!session.exhausted()) {
      const auto scores = score_features(bundle, session);
      std::set<std::size_t> scored;
      for (const auto& s : scores) {
        if (session.unit_known(s.unit)) return "trial " + std::to_string(t) + ": known unit " + std::to_string(s.unit) + " was scored";
        scored.insert(s.unit);
      }
      const auto unknown = session.unknown_units();
      if (scored != std::set<std::size_t>(unknown.begin(), unknown.end())) {
        return "trial " + std::to_string(t) + ": scored set differs from the unknown units";
      }
      const std::size_t next = select_next(scores);
      const auto& unit = bundle.costs.units()[next];
      std::vector<double> v;
      for (std::size_t m : unit.members) v.push_back(values[static_cast<Eigen::Index>(m)]);
      acquire(session, next, v);
    }
  }
  return {};
}

inline std::string check_cost_additivity(std::mt19937_64& rng, int trials) {
  for (int t = 0; t < trials; ++t) {
    const ModelBundle bundle = random_costed_bundle(rng);
    const auto [known, values] = random_context(bundle.costs, rng);
    AcquisitionSession session(bundle, known, values);
    if (session.total_cost() != 0.0) return "trial " + std::to_string(t) + ": initial context was charged";
    double expected = 0.0;
    auto order = session.unknown_units();
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t u : order) {
      const auto& unit = bundle.costs.units()[u];
      std::vector<double> v(unit.members.size(), 0.25);
      acquire(session, u, v);
      expected += unit.cost;
      if (std::abs(session.total_cost() - expected) > 1e-9 * std::max(1.0, expected)) {
        return "trial " + std::to_string(t) + ": total cost drifted from the sum of unit costs";
      }
    }
    double unpaid = 0.0;
    for (std::size_t u = 0; u < bundle.costs.num_units(); ++u) {
      if (known[bundle.costs.units()[u].members.front()]) unpaid += bundle.costs.units()[u].cost;
    }
    if (std::abs(session.total_cost() + unpaid - bundle.costs.total_cost()) > 1e-9 * bundle.costs.total_cost()) {
      return "trial " + std::to_string(t) + ": final cost plus initial context does not equal the total";
    }
  }
  return {};
}

inline std::string check_single_unit_mask_delta(std::mt19937_64& rng, int trials) {
  for (int t = 0; t < trials; ++t) {
    const ModelBundle bundle = random_costed_bundle(rng);
    const auto [known, values] = random_context(bundle.costs, rng);
    AcquisitionSession session(bundle, known, values);
    while (!session.exhausted()) {
      const MaskVector before = session.known();
      const Eigen::VectorXd before_values = session.values();
      const std::size_t step = session.step();
      const auto unknown = session.unknown_units();
      const std::size_t u = unknown[rng() % unknown.size()];
      const auto& unit = bundle.costs.units()[u];
      const auto fresh = random_values(unit.members.size(), rng);
      acquire(session, u, std::vector<double>(fresh.begin(), fresh.end()));
      for (std::size_t j = 0; j < before.size(); ++j) {
        const bool member = std::find(unit.members.begin(), unit.members.end(), j) != unit.members.end();
        const auto jj = static_cast<Eigen::Index>(j);
        if (member && !(before[j] == 0 && session.known()[j] == 1)) {
          return "trial " + std::to_string(t) + ": member " + std::to_string(j) + " did not flip to known";
        }
        if (!member && (before[j] != session.known()[j] || before_values[jj] != session.values()[jj])) {
          return "trial " + std::to_string(t) + ": non-member " + std::to_string(j) + " changed";
        }
      }
      if (session.step() != step + 1) return "trial " + std::to_string(t) + ": step did not advance by one";
    }
  }
  return {};
}

/// Replays a logged service session into a fresh service and a fresh
/// in-process session; predictions and costs must match bit for bit.
inline std::string check_replay_determinism(std::mt19937_64& rng, int trials) {
  for (int t = 0; t < trials; ++t) {
    const ModelBundle bundle = random_costed_bundle(rng);
    const auto dir = temp_dir("replay");
    ServiceConfig cfg;
    cfg.event_log = dir / "events.jsonl";
    std::vector<std::pair<std::string, nlohmann::json>> finals;
    {
      SessionService service(bundle, cfg);
      for (int s = 0; s < 3; ++s) {
        nlohmann::json values = nlohmann::json::object();
        const auto& first = bundle.costs.units().front();
        if (first.members.size() == 1) {
          values[first.name] = 0.3 + 0.1 * s;
        } else {
          values[first.name] = std::vector<double>(first.members.size(), 0.3 + 0.1 * s);
        }
        const auto created = service.create_session({{"values", values}});
        if (created.status != 201) return "create failed: " + created.body.dump();
        const std::string id = created.body.at("id");
        for (int step = 0; step < 3; ++step) {
          const auto suggestion = service.get_suggestion(id);
          if (suggestion.body.at("exhausted").get<bool>()) break;
          const auto& top = suggestion.body.at("candidates").at(0);
          const std::size_t u = top.at("unit");
          const auto& unit = bundle.costs.units()[u];
          nlohmann::json body;
          std::uniform_real_distribution<double> raw(-0.2, 1.2);
          if (unit.members.size() == 1) {
            body = {{"id", unit.name}, {"value", raw(rng)}};
          } else {
            std::vector<double> vs(unit.members.size());
            for (auto& v : vs) v = raw(rng);
            body = {{"group", unit.name}, {"values", vs}};
          }
          const auto posted = service.post_feature(id, body);
          if (posted.status != 200) return "post failed: " + posted.body.dump();
        }
        finals.emplace_back(id, service.get_session(id).body);
      }
      service.delete_session(finals.front().first);
      finals.erase(finals.begin());
    }
    SessionService replayed(bundle);
    if (replayed.replay(*cfg.event_log) != finals.size()) return "replay restored the wrong number of sessions";
    for (const auto& [id, state] : finals) {
      const auto again = replayed.get_session(id).body;
      if (again.at("prediction") != state.at("prediction") || again.at("total_cost") != state.at("total_cost") ||
          again.at("history") != state.at("history")) {
        return "session " + id + " diverged after replay";
      }
      // The same history applied to a bare session reproduces the prediction.
      MaskVector known = all_unknown(bundle.num_features());
      Eigen::VectorXd values = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(bundle.num_features()));
      for (const auto& name : state.at("initially_known")) {
        const auto j = static_cast<std::size_t>(std::find(bundle.feature_names.begin(), bundle.feature_names.end(),
                                                          name.get<std::string>()) - bundle.feature_names.begin());
        known[j] = 1;
        values[static_cast<Eigen::Index>(j)] = bundle.normalization.normalize_value(j, state.at("values").at(name).get<double>());
      }
      AcquisitionSession bare(bundle, known, values);
      for (const auto& event : state.at("history")) {
        acquire(bare, event.at("unit").get<std::size_t>(), event.at("normalized_values").get<std::vector<double>>());
      }
      std::vector<double> probs(bare.prediction().begin(), bare.prediction().end());
      if (probs != state.at("prediction").at("probabilities").get<std::vector<double>>() ||
          bare.total_cost() != state.at("total_cost").get<double>()) {
        return "bare replay of session " + id + " diverged";
      }
    }
    std::filesystem::remove_all(dir);
  }
  return {};
}

}  // namespace fact::testing
