// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fact {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Labeled instances. Rows are instances, columns are features.
struct Dataset {
  std::string name;
  RowMatrix features;
  std::vector<int> targets;
  std::vector<std::string> feature_names;
  std::vector<std::string> class_names;
  /// Feature index -> group id, filled for one-hot expanded categorical columns.
  std::map<std::size_t, std::string> group_map;

  std::size_t num_instances() const { return static_cast<std::size_t>(features.rows()); }
  std::size_t num_features() const { return static_cast<std::size_t>(features.cols()); }
  std::size_t num_classes() const { return class_names.size(); }

  Dataset subset(std::span<const std::size_t> rows) const;
  /// Throws on ragged rows, labels outside [0, r) or overlapping groups.
  void validate() const;
};

struct FeatureGroup {
  std::string id;
  double cost = 1.0;
  std::vector<std::size_t> members;
};

/// The smallest thing that can be bought at test time: either a single
/// ungrouped feature or a whole group, paid for once.
struct AcquisitionUnit {
  std::string name;
  double cost = 1.0;
  std::vector<std::size_t> members;
};

class CostSchedule {
 public:
  CostSchedule() = default;
  CostSchedule(std::vector<double> feature_costs, std::vector<FeatureGroup> groups = {},
               std::vector<std::string> feature_names = {});

  static CostSchedule uniform(std::size_t num_features, double cost = 1.0);

  std::size_t num_features() const { return feature_costs_.size(); }
  const std::vector<double>& feature_costs() const { return feature_costs_; }
  const std::vector<FeatureGroup>& groups() const { return groups_; }
  const std::vector<std::string>& feature_names() const { return feature_names_; }

  /// Units are ordered by their lowest member index; with no groups unit i is feature i.
  const std::vector<AcquisitionUnit>& units() const { return units_; }
  std::size_t num_units() const { return units_.size(); }
  std::size_t unit_of_feature(std::size_t feature) const { return unit_of_feature_.at(feature); }
  std::optional<std::size_t> find_unit(const std::string& name) const;

  /// Cost of acquiring every unit.
  double total_cost() const;
  CostSchedule scaled(double factor) const;

 private:
  std::vector<double> feature_costs_;
  std::vector<FeatureGroup> groups_;
  std::vector<std::string> feature_names_;
  std::vector<AcquisitionUnit> units_;
  std::vector<std::size_t> unit_of_feature_;
};

struct NormalizationSpec {
  std::vector<double> min;
  std::vector<double> max;
  std::string computed_on;
  int bits = 8;

  /// Fits per-feature ranges on `source`. Throws EmptySplit when it has no rows.
  static NormalizationSpec fit(const Dataset& source, std::string computed_on, int bits = 8);

  double upper_bound() const;
  /// Maps a raw value into [0, 1 - 2^-bits]; `clamped` reports whether the
  /// affine image fell outside that interval.
  double normalize_value(std::size_t feature, double raw, bool* clamped = nullptr) const;
  double denormalize_value(std::size_t feature, double value) const;
  Dataset apply(const Dataset& ds) const;
};

/// Fits the spec on `source` and applies it to `ds`.
std::pair<Dataset, NormalizationSpec> normalize(const Dataset& ds, const Dataset& source,
                                                std::string computed_on = "train", int bits = 8);

struct SplitSpec {
  double test_fraction = 0.15;
  double validation_fraction = 0.15;
  std::uint64_t seed = 0;
};

struct Splits {
  Dataset train;
  Dataset validation;
  Dataset test;
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> validation_rows;
  std::vector<std::size_t> test_rows;
};

Splits split(const Dataset& ds, const SplitSpec& spec);

/// Categorical declarations, per-feature costs and group costs for a CSV dataset.
struct Manifest {
  struct Group {
    std::string id;
    double cost = 1.0;
    std::vector<std::string> members;
  };
  std::vector<std::string> categorical;
  std::map<std::string, double> costs;
  std::vector<Group> groups;
};

Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const Manifest& manifest, const std::filesystem::path& path);

Dataset load_csv(const std::filesystem::path& path, const std::string& target_column,
                 const Manifest* manifest = nullptr);
void write_csv(const Dataset& ds, const std::filesystem::path& path,
               const std::string& target_column = "label");

/// Builds the cost schedule for `ds`. Features without an explicit cost cost 1.
CostSchedule build_cost_schedule(const Dataset& ds, const Manifest& manifest);
Manifest manifest_for(const CostSchedule& costs);

struct SynthConfig {
  int centers = 16;
  int informative_features = 32;
  int noise_features = 32;
  int points_per_center = 1000;
  int classes = 2;
  double cluster_variance = 0.25;
  double center_low = 0.0;
  double center_high = 1.0;
};

struct SynthesizedData {
  Dataset dataset;
  CostSchedule costs;
  RowMatrix centers;              // centers x informative features
  std::vector<int> center_class;  // class of each center
};

/// Gaussian clusters around uniform centers plus appended standard-normal
/// noise columns. Raw, unnormalized values.
SynthesizedData generate_synthesized(std::uint64_t seed, const SynthConfig& config = {});

std::uint64_t fingerprint(const Dataset& ds);

}  // namespace fact
