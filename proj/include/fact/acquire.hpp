// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "fact/model.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fact {

struct AcquisitionEvent {
  std::size_t step = 0;  // time step after the acquisition
  std::size_t unit = 0;
  double score = 0.0;
  std::vector<double> values;  // normalized member values
  double total_cost = 0.0;     // after the acquisition
};

/// Incremental acquisition state of one instance. Unknown features hold 0.
class AcquisitionSession {
 public:
  /// `values` is read only where `known` is set. Partially known groups are rejected.
  AcquisitionSession(const ModelBundle& bundle, const MaskVector& known, const Eigen::VectorXd& values);
  explicit AcquisitionSession(const ModelBundle& bundle);

  const ModelBundle& bundle() const { return *bundle_; }
  const Eigen::VectorXd& values() const { return values_; }
  const MaskVector& known() const { return known_; }
  const MaskVector& initial_known() const { return initial_known_; }
  double total_cost() const { return total_cost_; }
  std::size_t step() const { return history_.size(); }
  const std::vector<AcquisitionEvent>& history() const { return history_; }
  const Eigen::VectorXd& prediction() const { return prediction_; }
  std::size_t predicted_class() const;

  bool unit_known(std::size_t unit) const;
  std::vector<std::size_t> unknown_units() const;
  bool exhausted() const { return unknown_units().empty(); }

 private:
  friend void acquire(AcquisitionSession&, std::size_t, std::span<const double>, double);

  void refresh_prediction();

  const ModelBundle* bundle_;
  Eigen::VectorXd values_;
  MaskVector known_;
  MaskVector initial_known_;
  double total_cost_ = 0.0;
  std::vector<AcquisitionEvent> history_;
  Eigen::VectorXd prediction_;
};

struct AcquisitionScore {
  std::size_t unit = 0;
  double numerator = 0.0;
  double cost = 1.0;
  double score = 0.0;
};

/// Per unknown unit: sum over member bits of sensitivity x reconstruction
/// probability, divided by the unit cost. `sensitivity` is the flat per-bit
/// vector (features x bits); `reconstruction` the bit probabilities.
std::vector<AcquisitionScore> combine_scores(const Eigen::Ref<const Eigen::VectorXd>& sensitivity,
                                             const BitMatrix& reconstruction, const CostSchedule& costs,
                                             const MaskVector& known);

/// One frozen-autoencoder forward pass plus the predictor input Jacobian at
/// the current masked encoding. Scores are ordered by unit id.
std::vector<AcquisitionScore> score_features(const ModelBundle& bundle, const AcquisitionSession& session);

/// Highest score; ties go to the lowest unit id.
std::size_t select_next(std::span<const AcquisitionScore> scores);

/// Reveals `unit` with its normalized member values (one per member, in
/// member order) and advances the session one step.
void acquire(AcquisitionSession& session, std::size_t unit, std::span<const double> values,
             double score = 0.0);

struct StoppingRule {
  enum class Kind { kExhaustion, kBudget, kConfidence, kAccuracyFraction };
  Kind kind = Kind::kExhaustion;
  double threshold = 0.0;

  static StoppingRule exhaustion() { return {Kind::kExhaustion, 0.0}; }
  static StoppingRule budget(double max_cost);
  static StoppingRule confidence(double min_top_probability);
  /// Resolved by the evaluation harness against the population curve; a
  /// single run treats it like exhaustion.
  static StoppingRule accuracy_fraction(double fraction);
};

struct Choice {
  std::size_t unit = 0;
  double score = 0.0;
};

/// Anything that can pick the next unit for a session. Implementations are
/// immutable; `instance_key` seeds any per-instance randomness.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual std::string name() const = 0;
  virtual Choice choose(const AcquisitionSession& session, std::uint64_t instance_key) const = 0;
};

class FactPolicy final : public Policy {
 public:
  std::string name() const override { return "fact"; }
  Choice choose(const AcquisitionSession& session, std::uint64_t instance_key) const override;
};

struct TrajectoryPoint {
  std::size_t step = 0;
  std::optional<std::size_t> unit;  // empty for the initial point
  double score = 0.0;
  double cost = 0.0;
  std::size_t predicted_class = 0;
  double top_probability = 0.0;
  bool correct = false;
};

using Trajectory = std::vector<TrajectoryPoint>;

/// Returns the normalized member values of a unit for the instance being simulated.
using ValueOracle = std::function<std::vector<double>(const AcquisitionUnit&)>;

ValueOracle oracle_for(const Eigen::VectorXd& complete);

/// score -> select -> acquire until the stopping rule fires. The first point
/// is the prediction before any acquisition.
Trajectory run_policy(AcquisitionSession& session, const Policy& policy, const ValueOracle& oracle,
                      const StoppingRule& stopping, std::optional<int> label = std::nullopt,
                      std::uint64_t instance_key = 0);

void write_trajectory_csv(const Trajectory& trajectory, const CostSchedule& costs,
                          const std::filesystem::path& path);

}  // namespace fact
