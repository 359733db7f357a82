// SPDX-License-Identifier: Apache-2.0
#include "fact/eval.hpp"

#include "fact/error.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <thread>

namespace fact {

namespace {

/// Runs body(i) for i in [0, n) on up to `threads` workers. The first
/// exception is rethrown on the calling thread.
template <typename Body>
void parallel_for(std::size_t n, unsigned threads, Body&& body) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> workers;
  for (unsigned t = 0; t < threads; ++t) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& w : workers) w.join();
  if (failure) std::rethrow_exception(failure);
}

std::vector<Trajectory> run_all(const ModelBundle& bundle, const Dataset& test, const Policy& policy,
                                const StoppingRule& stopping, unsigned threads) {
  std::vector<Trajectory> trajectories(test.num_instances());
  parallel_for(test.num_instances(), threads, [&](std::size_t i) {
    const Eigen::VectorXd complete = test.features.row(static_cast<Eigen::Index>(i)).transpose();
    AcquisitionSession session(bundle);
    trajectories[i] = run_policy(session, policy, oracle_for(complete), stopping, test.targets[i], i);
  });
  return trajectories;
}

}  // namespace

CostCurve curve_from_trajectories(std::span<const Trajectory> trajectories, std::string policy) {
  CostCurve curve;
  curve.policy = std::move(policy);
  curve.instances = trajectories.size();
  if (trajectories.empty()) return curve;
  std::size_t steps = 0;
  for (const auto& t : trajectories) steps = std::max(steps, t.size());
  const double n = static_cast<double>(trajectories.size());
  for (std::size_t s = 0; s < steps; ++s) {
    double cost = 0.0;
    double correct = 0.0;
    for (const auto& t : trajectories) {
      const auto& p = t[std::min(s, t.size() - 1)];
      cost += p.cost;
      correct += p.correct ? 1.0 : 0.0;
    }
    curve.points.push_back({cost / n, correct / n});
  }
  return curve;
}

std::size_t accuracy_fraction_cutoff(const CostCurve& curve, double fraction) {
  if (curve.points.empty()) throw Error(ErrorCode::kInvalidArgument, "empty curve");
  double best = 0.0;
  for (const auto& p : curve.points) best = std::max(best, p.accuracy);
  for (std::size_t s = 0; s < curve.points.size(); ++s) {
    if (curve.points[s].accuracy >= fraction * best) return s;
  }
  return curve.points.size() - 1;
}

SimulationResult simulate(const ModelBundle& bundle, const Dataset& test, const Policy& policy,
                          const StoppingRule& stopping, unsigned threads) {
  if (test.num_instances() == 0) throw Error(ErrorCode::kEmptySplit, "simulate on an empty test split");
  if (test.num_features() != bundle.num_features()) {
    throw Error(ErrorCode::kDimensionMismatch, "test split width does not match the model");
  }
  const bool by_fraction = stopping.kind == StoppingRule::Kind::kAccuracyFraction;
  SimulationResult result;
  result.trajectories = run_all(bundle, test, policy, by_fraction ? StoppingRule::exhaustion() : stopping, threads);
  result.curve = curve_from_trajectories(result.trajectories, policy.name());
  if (by_fraction) {
    const std::size_t cutoff = accuracy_fraction_cutoff(result.curve, stopping.threshold);
    for (auto& t : result.trajectories) {
      if (t.size() > cutoff + 1) t.resize(cutoff + 1);
    }
    result.curve = curve_from_trajectories(result.trajectories, policy.name());
  }
  return result;
}

AuaccDetail auacc_detail(const CostCurve& curve) {
  const auto& pts = curve.points;
  if (pts.size() < 2) throw Error(ErrorCode::kInvalidArgument, "AUACC needs at least two curve points");
  AuaccDetail out;
  for (const auto& p : pts) out.max_accuracy = std::max(out.max_accuracy, p.accuracy);
  std::size_t converged = 0;
  while (pts[converged].accuracy < out.max_accuracy - 0.001) ++converged;
  out.convergence_cost = pts[converged].cost;
  const double span = pts[converged].cost - pts.front().cost;
  if (!(span > 0.0)) {
    out.auacc = pts.front().accuracy;
    return out;
  }
  double area = 0.0;
  for (std::size_t i = 0; i < converged; ++i) {
    area += (pts[i + 1].cost - pts[i].cost) * (pts[i].accuracy + pts[i + 1].accuracy) / 2.0;
  }
  out.auacc = area / span;
  return out;
}

double auacc(const CostCurve& curve) { return auacc_detail(curve).auacc; }

double accuracy_at_cost(const CostCurve& curve, double cost) {
  const auto& pts = curve.points;
  if (pts.empty()) throw Error(ErrorCode::kInvalidArgument, "empty curve");
  if (cost <= pts.front().cost) return pts.front().accuracy;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    if (cost <= pts[i + 1].cost) {
      const double width = pts[i + 1].cost - pts[i].cost;
      if (!(width > 0.0)) return pts[i + 1].accuracy;
      const double t = (cost - pts[i].cost) / width;
      return pts[i].accuracy + t * (pts[i + 1].accuracy - pts[i].accuracy);
    }
  }
  return pts.back().accuracy;
}

CostCurve CurveWithCi::mean_curve() const {
  CostCurve curve;
  curve.policy = policy;
  for (std::size_t s = 0; s < cost.size(); ++s) curve.points.push_back({cost[s], accuracy[s]});
  return curve;
}

const PolicySummary& AuaccReport::summary(const std::string& policy) const {
  for (const auto& p : policies) {
    if (p.policy == policy) return p;
  }
  throw Error(ErrorCode::kNotFound, "no policy '" + policy + "' in report");
}

const CurveWithCi& AuaccReport::curve(const std::string& policy) const {
  for (const auto& c : curves) {
    if (c.policy == policy) return c;
  }
  throw Error(ErrorCode::kNotFound, "no policy '" + policy + "' in report");
}

AuaccReport compare_policies(std::span<const ModelBundle* const> bundles, const Dataset& test,
                             std::span<const NamedPolicy> policies, std::span<const std::uint64_t> seeds,
                             const StoppingRule& stopping, unsigned threads) {
  if (seeds.empty()) throw Error(ErrorCode::kInvalidArgument, "compare_policies needs at least one seed");
  if (bundles.empty() || (bundles.size() != 1 && bundles.size() != seeds.size())) {
    throw Error(ErrorCode::kInvalidArgument, "need one bundle, or one bundle per seed");
  }
  AuaccReport report;
  report.total_cost = bundles.front()->costs.total_cost();
  report.instances = test.num_instances();
  report.seeds.assign(seeds.begin(), seeds.end());

  for (const auto& named : policies) {
    std::vector<CostCurve> runs;
    for (std::size_t r = 0; r < seeds.size(); ++r) {
      const ModelBundle& bundle = *bundles[bundles.size() == 1 ? 0 : r];
      const auto policy = named.make(seeds[r]);
      runs.push_back(simulate(bundle, test, *policy, stopping, threads).curve);
    }
    std::size_t steps = 0;
    for (const auto& c : runs) steps = std::max(steps, c.points.size());

    CurveWithCi out;
    out.policy = named.name;
    const double n = static_cast<double>(runs.size());
    for (std::size_t s = 0; s < steps; ++s) {
      double cost = 0.0;
      double mean = 0.0;
      for (const auto& c : runs) {
        const auto& p = c.points[std::min(s, c.points.size() - 1)];
        cost += p.cost;
        mean += p.accuracy;
      }
      cost /= n;
      mean /= n;
      double var = 0.0;
      for (const auto& c : runs) {
        const double a = c.points[std::min(s, c.points.size() - 1)].accuracy;
        var += (a - mean) * (a - mean);
      }
      const double half = runs.size() > 1 ? 1.96 * std::sqrt(var / (n - 1.0)) / std::sqrt(n) : 0.0;
      out.cost.push_back(cost);
      out.accuracy.push_back(mean);
      out.ci_low.push_back(mean - half);
      out.ci_high.push_back(mean + half);
    }

    const CostCurve mean_curve = out.mean_curve();
    PolicySummary summary;
    summary.policy = named.name;
    if (mean_curve.points.size() >= 2) {
      const auto detail = auacc_detail(mean_curve);
      summary.auacc = detail.auacc;
      summary.convergence_cost = detail.convergence_cost;
      summary.max_accuracy = detail.max_accuracy;
    } else {
      summary.auacc = summary.max_accuracy = mean_curve.points.front().accuracy;
    }
    for (std::size_t f = 0; f < kReportFractions.size(); ++f) {
      summary.accuracy_at_fraction[f] = accuracy_at_cost(mean_curve, kReportFractions[f] * report.total_cost);
    }
    report.policies.push_back(summary);
    report.curves.push_back(std::move(out));
  }
  return report;
}

double dominance_fraction(const CostCurve& a, const CostCurve& b, int grid_points) {
  if (a.points.empty() || b.points.empty() || grid_points < 2) {
    throw Error(ErrorCode::kInvalidArgument, "dominance_fraction needs non-empty curves and a grid");
  }
  const double lo = std::max(a.points.front().cost, b.points.front().cost);
  const double hi = std::min(a.points.back().cost, b.points.back().cost);
  int wins = 0;
  for (int g = 0; g < grid_points; ++g) {
    const double c = lo + (hi - lo) * g / (grid_points - 1);
    if (accuracy_at_cost(a, c) >= accuracy_at_cost(b, c)) ++wins;
  }
  return static_cast<double>(wins) / grid_points;
}

void write_curve_csv(const CurveWithCi& curve, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << "policy,step,mean_cost,accuracy,ci_low,ci_high\n";
  char buf[160];
  for (std::size_t s = 0; s < curve.cost.size(); ++s) {
    std::snprintf(buf, sizeof buf, ",%zu,%.17g,%.17g,%.17g,%.17g\n", s, curve.cost[s], curve.accuracy[s],
                  curve.ci_low[s], curve.ci_high[s]);
    out << curve.policy << buf;
  }
  if (!out) throw Error(ErrorCode::kIo, "failed writing " + path.string());
}

void write_curves_csv(const AuaccReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << "policy,step,mean_cost,accuracy,ci_low,ci_high\n";
  char buf[160];
  for (const auto& curve : report.curves) {
    for (std::size_t s = 0; s < curve.cost.size(); ++s) {
      std::snprintf(buf, sizeof buf, ",%zu,%.17g,%.17g,%.17g,%.17g\n", s, curve.cost[s], curve.accuracy[s],
                    curve.ci_low[s], curve.ci_high[s]);
      out << curve.policy << buf;
    }
  }
  if (!out) throw Error(ErrorCode::kIo, "failed writing " + path.string());
}

nlohmann::json summary_json(const AuaccReport& report) {
  nlohmann::json doc;
  doc["schema_version"] = 1;
  doc["total_cost"] = report.total_cost;
  doc["instances"] = report.instances;
  doc["seeds"] = report.seeds;
  doc["cost_fractions"] = kReportFractions;
  doc["policies"] = nlohmann::json::array();
  for (const auto& p : report.policies) {
    nlohmann::json at = nlohmann::json::object();
    for (std::size_t f = 0; f < kReportFractions.size(); ++f) {
      at[std::to_string(static_cast<int>(kReportFractions[f] * 100)) + "%"] = p.accuracy_at_fraction[f];
    }
    doc["policies"].push_back({{"policy", p.policy},
                               {"auacc", p.auacc},
                               {"convergence_cost", p.convergence_cost},
                               {"max_accuracy", p.max_accuracy},
                               {"accuracy_at_cost_fraction", at}});
  }
  return doc;
}

BetaSweepResult beta_sweep(const TrainingInputs& inputs, const Dataset& test, const ArchitectureSpec& arch,
                           std::span<const std::pair<double, double>> parameters, const TrainConfig& config,
                           std::uint64_t corruption_seed, unsigned threads) {
  BetaSweepResult result;
  const FactPolicy fact;
  for (const auto& [alpha, beta] : parameters) {
    const CorruptionConfig corruption{alpha, beta, corruption_seed};
    const ModelBundle bundle = train_model(inputs, arch, corruption, config);
    const auto sim = simulate(bundle, test, fact, StoppingRule::exhaustion(), threads);
    BetaSweepRow row;
    row.alpha = alpha;
    row.beta = beta;
    row.auacc = auacc(sim.curve);
    row.full_accuracy = full_feature_accuracy(bundle, test);
    row.denoising = denoising_percentage(bundle, test, corruption);
    result.rows.push_back(row);
  }
  if (!result.rows.empty()) {
    const auto [lo, hi] = std::minmax_element(result.rows.begin(), result.rows.end(),
                                              [](const auto& a, const auto& b) { return a.auacc < b.auacc; });
    result.spread = hi->auacc - lo->auacc;
  }
  return result;
}

std::vector<std::vector<int>> acquisition_order_matrix(std::span<const Trajectory> trajectories,
                                                       const CostSchedule& costs, std::size_t max_step) {
  std::vector<std::vector<int>> matrix;
  matrix.reserve(trajectories.size());
  for (const auto& t : trajectories) {
    std::vector<int> row(costs.num_features(), 0);
    for (const auto& p : t) {
      if (!p.unit || p.step > max_step) continue;
      for (std::size_t m : costs.units().at(*p.unit).members) row[m] = static_cast<int>(p.step);
    }
    matrix.push_back(std::move(row));
  }
  return matrix;
}

std::vector<std::vector<int>> acquisition_order_matrix(const ModelBundle& bundle, const Dataset& sample,
                                                       const Policy& policy, const StoppingRule& stopping,
                                                       unsigned threads) {
  const auto sim = simulate(bundle, sample, policy, stopping, threads);
  return acquisition_order_matrix(sim.trajectories, bundle.costs, std::numeric_limits<std::size_t>::max());
}

void write_order_matrix_csv(const std::vector<std::vector<int>>& matrix, const std::vector<std::string>& names,
                            const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << "instance";
  for (const auto& n : names) out << ',' << n;
  out << '\n';
  for (std::size_t i = 0; i < matrix.size(); ++i) {
    out << i;
    for (int r : matrix[i]) out << ',' << r;
    out << '\n';
  }
  if (!out) throw Error(ErrorCode::kIo, "failed writing " + path.string());
}

}  // namespace fact
