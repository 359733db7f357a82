// SPDX-License-Identifier: Apache-2.0
#include "fact/acquire.hpp"

#include "fact/error.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace fact {

AcquisitionSession::AcquisitionSession(const ModelBundle& bundle)
    : AcquisitionSession(bundle, all_unknown(bundle.num_features()),
                         Eigen::VectorXd::Zero(static_cast<Eigen::Index>(bundle.num_features()))) {}

AcquisitionSession::AcquisitionSession(const ModelBundle& bundle, const MaskVector& known,
                                       const Eigen::VectorXd& values)
    : bundle_(&bundle) {
  if (!bundle.trained()) throw Error(ErrorCode::kInvalidArgument, "session needs a trained bundle");
  const auto d = bundle.num_features();
  if (known.size() != d || static_cast<std::size_t>(values.size()) != d) {
    throw Error(ErrorCode::kDimensionMismatch, "session mask/value width does not match the model");
  }
  const double hi = max_representable(bundle.bits());
  values_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
  for (std::size_t j = 0; j < d; ++j) {
    if (!known[j]) continue;
    const double v = values[static_cast<Eigen::Index>(j)];
    if (!(v >= 0.0 && v <= hi)) {
      throw Error(ErrorCode::kOutOfRange, "initial value of feature " + std::to_string(j) + " out of range");
    }
    values_[static_cast<Eigen::Index>(j)] = v;
  }
  for (const auto& unit : bundle.costs.units()) {
    std::size_t count = 0;
    for (std::size_t m : unit.members) count += known[m] ? 1 : 0;
    if (count != 0 && count != unit.members.size()) {
      throw Error(ErrorCode::kInvalidArgument, "group '" + unit.name + "' is only partially known");
    }
  }
  known_ = known;
  initial_known_ = known;
  refresh_prediction();
}

void AcquisitionSession::refresh_prediction() { prediction_ = predict(*bundle_, values_, known_); }

std::size_t AcquisitionSession::predicted_class() const {
  Eigen::Index arg = 0;
  prediction_.maxCoeff(&arg);
  return static_cast<std::size_t>(arg);
}

bool AcquisitionSession::unit_known(std::size_t unit) const {
  const auto& units = bundle_->costs.units();
  if (unit >= units.size()) throw Error(ErrorCode::kOutOfRange, "unit id " + std::to_string(unit) + " out of range");
  return known_[units[unit].members.front()] != 0;
}

std::vector<std::size_t> AcquisitionSession::unknown_units() const {
  std::vector<std::size_t> out;
  for (std::size_t u = 0; u < bundle_->costs.num_units(); ++u) {
    if (!unit_known(u)) out.push_back(u);
  }
  return out;
}

std::vector<AcquisitionScore> combine_scores(const Eigen::Ref<const Eigen::VectorXd>& sensitivity,
                                             const BitMatrix& reconstruction, const CostSchedule& costs,
                                             const MaskVector& known) {
  const auto d = reconstruction.features();
  const int bits = reconstruction.bits();
  if (costs.num_features() != d || known.size() != d ||
      sensitivity.size() != static_cast<Eigen::Index>(d) * bits) {
    throw Error(ErrorCode::kDimensionMismatch, "combine_scores: widths disagree");
  }
  std::vector<AcquisitionScore> scores;
  for (std::size_t u = 0; u < costs.num_units(); ++u) {
    const auto& unit = costs.units()[u];
    if (known[unit.members.front()]) continue;
    double numerator = 0.0;
    for (std::size_t j : unit.members) {
      for (int b = 0; b < bits; ++b) {
        numerator += sensitivity[static_cast<Eigen::Index>(j) * bits + b] * reconstruction(j, b);
      }
    }
    scores.push_back({u, numerator, unit.cost, numerator / unit.cost});
  }
  return scores;
}

std::vector<AcquisitionScore> score_features(const ModelBundle& bundle, const AcquisitionSession& session) {
  if (session.exhausted()) throw Error(ErrorCode::kNoUnknownFeatures, "no unknown features left to score");
  const BitMatrix encoded = quantize(session.values(), session.known(), bundle.bits());
  const BitMatrix reconstruction(forward(bundle.autoencoder, encoded.flat()), bundle.bits());
  const Eigen::VectorXd sensitivity = input_sensitivity(bundle.predictor, encoded.flat());
  return combine_scores(sensitivity, reconstruction, bundle.costs, session.known());
}

std::size_t select_next(std::span<const AcquisitionScore> scores) {
  if (scores.empty()) throw Error(ErrorCode::kNoUnknownFeatures, "no candidates to select from");
  const AcquisitionScore* best = &scores.front();
  for (const auto& s : scores) {
    if (s.score > best->score || (s.score == best->score && s.unit < best->unit)) best = &s;
  }
  return best->unit;
}

void acquire(AcquisitionSession& session, std::size_t unit, std::span<const double> values, double score) {
  const auto& units = session.bundle().costs.units();
  if (unit >= units.size()) throw Error(ErrorCode::kOutOfRange, "unit id " + std::to_string(unit) + " out of range");
  const auto& spec = units[unit];
  if (session.unit_known(unit)) {
    throw Error(ErrorCode::kAlreadyKnown, "'" + spec.name + "' is already known");
  }
  if (values.size() != spec.members.size()) {
    throw Error(ErrorCode::kInvalidArgument, "'" + spec.name + "' needs " + std::to_string(spec.members.size()) +
                                                 " values, got " + std::to_string(values.size()));
  }
  const double hi = max_representable(session.bundle().bits());
  for (double v : values) {
    if (!(v >= 0.0 && v <= hi)) {
      throw Error(ErrorCode::kOutOfRange, "value for '" + spec.name + "' outside the normalized range");
    }
  }
  for (std::size_t i = 0; i < spec.members.size(); ++i) {
    session.values_[static_cast<Eigen::Index>(spec.members[i])] = values[i];
    session.known_[spec.members[i]] = 1;
  }
  session.total_cost_ += spec.cost;
  session.refresh_prediction();
  session.history_.push_back(
      {session.history_.size() + 1, unit, score, std::vector<double>(values.begin(), values.end()), session.total_cost_});
}

StoppingRule StoppingRule::budget(double max_cost) {
  if (!(max_cost >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "budget must be non-negative");
  return {Kind::kBudget, max_cost};
}

StoppingRule StoppingRule::confidence(double min_top_probability) {
  if (!(min_top_probability > 0.0 && min_top_probability <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "confidence threshold must lie in (0, 1]");
  }
  return {Kind::kConfidence, min_top_probability};
}

StoppingRule StoppingRule::accuracy_fraction(double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "accuracy fraction must lie in (0, 1]");
  }
  return {Kind::kAccuracyFraction, fraction};
}

Choice FactPolicy::choose(const AcquisitionSession& session, std::uint64_t) const {
  const auto scores = score_features(session.bundle(), session);
  const std::size_t unit = select_next(scores);
  for (const auto& s : scores) {
    if (s.unit == unit) return {unit, s.score};
  }
  return {unit, 0.0};
}

ValueOracle oracle_for(const Eigen::VectorXd& complete) {
  return [complete](const AcquisitionUnit& unit) {
    std::vector<double> out;
    out.reserve(unit.members.size());
    for (std::size_t m : unit.members) out.push_back(complete[static_cast<Eigen::Index>(m)]);
    return out;
  };
}

namespace {

TrajectoryPoint snapshot(const AcquisitionSession& session, std::optional<std::size_t> unit, double score,
                         std::optional<int> label) {
  TrajectoryPoint p;
  p.step = session.step();
  p.unit = unit;
  p.score = score;
  p.cost = session.total_cost();
  p.predicted_class = session.predicted_class();
  p.top_probability = session.prediction().maxCoeff();
  p.correct = label.has_value() && static_cast<int>(p.predicted_class) == *label;
  return p;
}

}  // namespace

Trajectory run_policy(AcquisitionSession& session, const Policy& policy, const ValueOracle& oracle,
                      const StoppingRule& stopping, std::optional<int> label, std::uint64_t instance_key) {
  Trajectory trajectory;
  trajectory.push_back(snapshot(session, std::nullopt, 0.0, label));
  const auto& units = session.bundle().costs.units();
  while (!session.exhausted()) {
    if (stopping.kind == StoppingRule::Kind::kConfidence && session.prediction().maxCoeff() >= stopping.threshold) {
      break;
    }
    const Choice choice = policy.choose(session, instance_key);
    if (stopping.kind == StoppingRule::Kind::kBudget &&
        session.total_cost() + units.at(choice.unit).cost > stopping.threshold) {
      break;
    }
    const auto values = oracle(units.at(choice.unit));
    acquire(session, choice.unit, values, choice.score);
    trajectory.push_back(snapshot(session, choice.unit, choice.score, label));
  }
  return trajectory;
}

void write_trajectory_csv(const Trajectory& trajectory, const CostSchedule& costs, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << "step,id,score,cost_so_far,predicted_class,top_probability,correct\n";
  char buf[256];
  for (const auto& p : trajectory) {
    const std::string id = p.unit ? costs.units().at(*p.unit).name : "";
    std::snprintf(buf, sizeof buf, "%zu,%s,%.17g,%.17g,%zu,%.17g,%d\n", p.step, id.c_str(), p.score, p.cost,
                  p.predicted_class, p.top_probability, p.correct ? 1 : 0);
    out << buf;
  }
  if (!out) throw Error(ErrorCode::kIo, "failed writing " + path.string());
}

}  // namespace fact
