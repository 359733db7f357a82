// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "fact/acquire.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace fact {

/// Uniformly random acquisition order, re-drawn per instance.
class RandomPolicy final : public Policy {
 public:
  explicit RandomPolicy(std::uint64_t seed) : seed_(seed) {}
  std::string name() const override { return "random"; }
  Choice choose(const AcquisitionSession& session, std::uint64_t instance_key) const override;

  std::vector<std::size_t> order(std::size_t units, std::uint64_t instance_key) const;

 private:
  std::uint64_t seed_;
};

/// Equal-frequency bin index (0-based) of every value. Tied values always
/// share a bin, so fewer than `bins` codes may appear.
std::vector<int> quantile_bins(std::span<const double> values, int bins = 10);

/// Plug-in mutual information in nats between two discrete codings.
double mutual_information(std::span<const int> a, std::span<const int> b);

struct StaticOrder {
  std::vector<std::size_t> units;  // ranked
  std::vector<double> mi;          // per ranked unit, nats
  std::vector<double> scores;      // ranking key: mi, or mi / cost
  bool cost_normalized = false;
};

bool has_uniform_costs(const CostSchedule& costs);

/// Ranks units by MI with the label (10 quantile bins); a group takes the max
/// over its members. With `cost_normalized` the key is MI / cost.
StaticOrder static_mi_order(const Dataset& train, const CostSchedule& costs, bool cost_normalized, int bins = 10);

void write_static_order_csv(const StaticOrder& order, const CostSchedule& costs, const std::filesystem::path& path);

class StaticPolicy final : public Policy {
 public:
  explicit StaticPolicy(StaticOrder order) : order_(std::move(order)) {}
  std::string name() const override { return "static"; }
  Choice choose(const AcquisitionSession& session, std::uint64_t instance_key) const override;

  const StaticOrder& order() const { return order_; }

 private:
  StaticOrder order_;
};

/// Marginal 5-bin histogram per feature over [0, 1].
struct HistogramModel {
  static constexpr int kBins = 5;
  std::vector<std::array<double, kBins>> probabilities;

  static HistogramModel fit(const Dataset& train);
  static double center(int bin) { return (bin + 0.5) / kBins; }
};

/// Expected L1 change of the class probabilities when each unknown unit is
/// set to each histogram bin center, one predictor forward pass per term.
/// Entries are ordered like `session.unknown_units()`.
std::vector<AcquisitionScore> exhaustive_scores(const ModelBundle& bundle, const AcquisitionSession& session,
                                                const HistogramModel& histograms);

class ExhaustivePolicy final : public Policy {
 public:
  explicit ExhaustivePolicy(HistogramModel histograms) : histograms_(std::move(histograms)) {}
  std::string name() const override { return "exhaustive"; }
  Choice choose(const AcquisitionSession& session, std::uint64_t instance_key) const override;

 private:
  HistogramModel histograms_;
};

}  // namespace fact
