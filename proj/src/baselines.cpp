// SPDX-License-Identifier: Apache-2.0
#include "fact/baselines.hpp"

#include "fact/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <random>

namespace fact {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::vector<std::size_t> RandomPolicy::order(std::size_t units, std::uint64_t instance_key) const {
  std::vector<std::size_t> out(units);
  std::iota(out.begin(), out.end(), 0);
  std::mt19937_64 rng(splitmix64(seed_ ^ splitmix64(instance_key)));
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

Choice RandomPolicy::choose(const AcquisitionSession& session, std::uint64_t instance_key) const {
  for (std::size_t u : order(session.bundle().costs.num_units(), instance_key)) {
    if (!session.unit_known(u)) return {u, 0.0};
  }
  throw Error(ErrorCode::kNoUnknownFeatures, "random policy: nothing left to acquire");
}

std::vector<int> quantile_bins(std::span<const double> values, int bins) {
  if (bins < 1) throw Error(ErrorCode::kInvalidArgument, "need at least one bin");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> edges;
  const std::size_t n = sorted.size();
  for (int k = 1; k < bins && n > 0; ++k) {
    edges.push_back(sorted[static_cast<std::size_t>(k) * n / static_cast<std::size_t>(bins)]);
  }
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  std::vector<int> codes;
  codes.reserve(values.size());
  for (double v : values) {
    codes.push_back(static_cast<int>(std::upper_bound(edges.begin(), edges.end(), v) - edges.begin()));
  }
  return codes;
}

double mutual_information(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) throw Error(ErrorCode::kDimensionMismatch, "mutual_information: length mismatch");
  if (a.empty()) return 0.0;
  std::map<std::pair<int, int>, double> joint;
  std::map<int, double> pa, pb;
  const double n = static_cast<double>(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    joint[{a[i], b[i]}] += 1.0;
    pa[a[i]] += 1.0;
    pb[b[i]] += 1.0;
  }
  double mi = 0.0;
  for (const auto& [key, count] : joint) {
    const double pxy = count / n;
    mi += pxy * std::log(pxy / ((pa[key.first] / n) * (pb[key.second] / n)));
  }
  return std::max(mi, 0.0);
}

bool has_uniform_costs(const CostSchedule& costs) {
  const auto& units = costs.units();
  return std::all_of(units.begin(), units.end(), [&](const AcquisitionUnit& u) { return u.cost == units.front().cost; });
}

StaticOrder static_mi_order(const Dataset& train, const CostSchedule& costs, bool cost_normalized, int bins) {
  if (train.num_features() != costs.num_features()) {
    throw Error(ErrorCode::kDimensionMismatch, "static_mi_order: cost schedule width mismatch");
  }
  if (train.num_instances() == 0) throw Error(ErrorCode::kEmptySplit, "static_mi_order on an empty split");
  std::vector<double> feature_mi(train.num_features());
  std::vector<double> column(train.num_instances());
  for (std::size_t j = 0; j < train.num_features(); ++j) {
    for (std::size_t i = 0; i < train.num_instances(); ++i) {
      column[i] = train.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
    feature_mi[j] = mutual_information(quantile_bins(column, bins), train.targets);
  }

  struct Entry {
    std::size_t unit;
    double mi;
    double key;
  };
  std::vector<Entry> entries;
  for (std::size_t u = 0; u < costs.num_units(); ++u) {
    const auto& unit = costs.units()[u];
    double mi = 0.0;
    for (std::size_t m : unit.members) mi = std::max(mi, feature_mi[m]);
    entries.push_back({u, mi, cost_normalized ? mi / unit.cost : mi});
  }
  std::stable_sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) { return a.key > b.key; });

  StaticOrder order;
  order.cost_normalized = cost_normalized;
  for (const auto& e : entries) {
    order.units.push_back(e.unit);
    order.mi.push_back(e.mi);
    order.scores.push_back(e.key);
  }
  return order;
}

void write_static_order_csv(const StaticOrder& order, const CostSchedule& costs, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << "rank,id,mi,cost\n";
  char buf[64];
  for (std::size_t r = 0; r < order.units.size(); ++r) {
    const auto& unit = costs.units().at(order.units[r]);
    std::snprintf(buf, sizeof buf, ",%.17g,%.17g\n", order.mi[r], unit.cost);
    out << r + 1 << ',' << unit.name << buf;
  }
  if (!out) throw Error(ErrorCode::kIo, "failed writing " + path.string());
}

Choice StaticPolicy::choose(const AcquisitionSession& session, std::uint64_t) const {
  for (std::size_t r = 0; r < order_.units.size(); ++r) {
    if (!session.unit_known(order_.units[r])) return {order_.units[r], order_.scores[r]};
  }
  throw Error(ErrorCode::kNoUnknownFeatures, "static policy: nothing left to acquire");
}

HistogramModel HistogramModel::fit(const Dataset& train) {
  if (train.num_instances() == 0) throw Error(ErrorCode::kEmptySplit, "histograms need a non-empty split");
  HistogramModel model;
  model.probabilities.assign(train.num_features(), {});
  const double n = static_cast<double>(train.num_instances());
  for (std::size_t j = 0; j < train.num_features(); ++j) {
    auto& probs = model.probabilities[j];
    for (std::size_t i = 0; i < train.num_instances(); ++i) {
      const double v = train.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      const int bin = std::clamp(static_cast<int>(std::floor(v * kBins)), 0, kBins - 1);
      probs[static_cast<std::size_t>(bin)] += 1.0;
    }
    for (double& p : probs) p /= n;
  }
  return model;
}

std::vector<AcquisitionScore> exhaustive_scores(const ModelBundle& bundle, const AcquisitionSession& session,
                                                const HistogramModel& histograms) {
  if (histograms.probabilities.size() != bundle.num_features()) {
    throw Error(ErrorCode::kDimensionMismatch, "histogram width does not match the model");
  }
  const Eigen::VectorXd& current = session.prediction();
  std::vector<AcquisitionScore> out;
  Eigen::VectorXd probe = session.values();
  MaskVector mask = session.known();
  for (std::size_t u : session.unknown_units()) {
    const auto& unit = bundle.costs.units()[u];
    double utility = 0.0;
    for (std::size_t j : unit.members) {
      const auto jj = static_cast<Eigen::Index>(j);
      mask[j] = 1;
      for (int m = 0; m < HistogramModel::kBins; ++m) {
        const double p = histograms.probabilities[j][static_cast<std::size_t>(m)];
        probe[jj] = std::min(HistogramModel::center(m), max_representable(bundle.bits()));
        utility += p * (predict(bundle, probe, mask) - current).lpNorm<1>();
      }
      mask[j] = 0;
      probe[jj] = 0.0;
    }
    out.push_back({u, utility, unit.cost, utility / unit.cost});
  }
  return out;
}

Choice ExhaustivePolicy::choose(const AcquisitionSession& session, std::uint64_t) const {
  const auto scores = exhaustive_scores(session.bundle(), session, histograms_);
  const std::size_t unit = select_next(scores);
  for (const auto& s : scores) {
    if (s.unit == unit) return {unit, s.score};
  }
  return {unit, 0.0};
}

}  // namespace fact
