// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "fact/acquire.hpp"
#include "fact/model.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace fact {

struct CurvePoint {
  double cost = 0.0;
  double accuracy = 0.0;
};

/// Population accuracy versus mean cost spent, one point per acquisition step.
struct CostCurve {
  std::string policy;
  std::vector<CurvePoint> points;
  std::size_t instances = 0;
  std::vector<std::uint64_t> seeds;
};

struct SimulationResult {
  CostCurve curve;
  std::vector<Trajectory> trajectories;
};

/// Runs `policy` on every test instance from the all-unknown state. Instances
/// that stop early hold their last state for later steps. An accuracy-fraction
/// rule runs to exhaustion and truncates at the population cutoff step.
SimulationResult simulate(const ModelBundle& bundle, const Dataset& test, const Policy& policy,
                          const StoppingRule& stopping, unsigned threads = 0);

CostCurve curve_from_trajectories(std::span<const Trajectory> trajectories, std::string policy);

/// First step whose accuracy reaches `fraction` of the curve's maximum.
std::size_t accuracy_fraction_cutoff(const CostCurve& curve, double fraction);

struct AuaccDetail {
  double auacc = 0.0;
  double convergence_cost = 0.0;
  double max_accuracy = 0.0;
};

/// Normalized trapezoidal area from cost 0 to the first cost where accuracy
/// is within 0.001 of the maximum.
AuaccDetail auacc_detail(const CostCurve& curve);
double auacc(const CostCurve& curve);

/// Linear interpolation on the curve; clamps outside its cost range.
double accuracy_at_cost(const CostCurve& curve, double cost);

inline constexpr std::array<double, 5> kReportFractions{0.0, 0.25, 0.5, 0.75, 1.0};

struct PolicySummary {
  std::string policy;
  double auacc = 0.0;
  double convergence_cost = 0.0;
  double max_accuracy = 0.0;
  std::array<double, 5> accuracy_at_fraction{};
};

struct CurveWithCi {
  std::string policy;
  std::vector<double> cost;
  std::vector<double> accuracy;
  std::vector<double> ci_low;
  std::vector<double> ci_high;

  CostCurve mean_curve() const;
};

struct AuaccReport {
  double total_cost = 0.0;
  std::size_t instances = 0;
  std::vector<std::uint64_t> seeds;
  std::vector<PolicySummary> policies;
  std::vector<CurveWithCi> curves;

  const PolicySummary& summary(const std::string& policy) const;
  const CurveWithCi& curve(const std::string& policy) const;
};

using PolicyFactory = std::function<std::unique_ptr<Policy>(std::uint64_t seed)>;

struct NamedPolicy {
  std::string name;
  PolicyFactory make;
};

/// Simulates every policy once per seed. With one bundle it is shared by all
/// seeds; otherwise bundles[i] pairs with seeds[i] (retrained models). The
/// CI is mean +- 1.96 standard errors across runs at each step.
AuaccReport compare_policies(std::span<const ModelBundle* const> bundles, const Dataset& test,
                             std::span<const NamedPolicy> policies, std::span<const std::uint64_t> seeds,
                             const StoppingRule& stopping = StoppingRule::exhaustion(), unsigned threads = 0);

/// Fraction of cost-grid points (grid over the shared cost range) where
/// `a` is at least `b`.
double dominance_fraction(const CostCurve& a, const CostCurve& b, int grid_points = 100);

void write_curves_csv(const AuaccReport& report, const std::filesystem::path& path);
void write_curve_csv(const CurveWithCi& curve, const std::filesystem::path& path);
nlohmann::json summary_json(const AuaccReport& report);

struct BetaSweepRow {
  double alpha = 0.0;
  double beta = 0.0;
  double auacc = 0.0;
  double full_accuracy = 0.0;
  double denoising = 0.0;
};

struct BetaSweepResult {
  std::vector<BetaSweepRow> rows;
  double spread = 0.0;  // max - min AUACC
};

/// Full retrain per (alpha, beta) pair, then FACT AUACC on `test`.
BetaSweepResult beta_sweep(const TrainingInputs& inputs, const Dataset& test, const ArchitectureSpec& arch,
                           std::span<const std::pair<double, double>> parameters, const TrainConfig& config,
                           std::uint64_t corruption_seed, unsigned threads = 0);

/// n x d acquisition ranks (1 = first); 0 marks features not acquired within
/// `max_step` steps. Group members share their group's rank.
std::vector<std::vector<int>> acquisition_order_matrix(std::span<const Trajectory> trajectories,
                                                       const CostSchedule& costs, std::size_t max_step);

std::vector<std::vector<int>> acquisition_order_matrix(const ModelBundle& bundle, const Dataset& sample,
                                                       const Policy& policy, const StoppingRule& stopping,
                                                       unsigned threads = 0);

void write_order_matrix_csv(const std::vector<std::vector<int>>& matrix, const std::vector<std::string>& names,
                            const std::filesystem::path& path);

}  // namespace fact
