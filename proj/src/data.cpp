// SPDX-License-Identifier: Apache-2.0
#include "fact/data.hpp"

#include "fact/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace fact {

using json = nlohmann::json;

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kParse: return "parse";
    case ErrorCode::kUnknownColumn: return "unknown_column";
    case ErrorCode::kEmptySplit: return "empty_split";
    case ErrorCode::kOutOfRange: return "out_of_range";
    case ErrorCode::kDimensionMismatch: return "dimension_mismatch";
    case ErrorCode::kNonFinite: return "non_finite";
    case ErrorCode::kDivergence: return "divergence";
    case ErrorCode::kNoUnknownFeatures: return "no_unknown_features";
    case ErrorCode::kAlreadyKnown: return "already_known";
    case ErrorCode::kNotFound: return "not_found";
    case ErrorCode::kConflict: return "conflict";
  }
  return "unknown";
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset out;
  out.name = name;
  out.feature_names = feature_names;
  out.class_names = class_names;
  out.group_map = group_map;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
  out.targets.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.features.row(static_cast<Eigen::Index>(i)) = features.row(static_cast<Eigen::Index>(rows[i]));
    out.targets.push_back(targets.at(rows[i]));
  }
  return out;
}

void Dataset::validate() const {
  if (targets.size() != num_instances()) {
    throw Error(ErrorCode::kDimensionMismatch, "dataset has " + std::to_string(num_instances()) +
                                                   " rows but " + std::to_string(targets.size()) +
                                                   " labels");
  }
  if (!feature_names.empty() && feature_names.size() != num_features()) {
    throw Error(ErrorCode::kDimensionMismatch, "feature name count does not match feature count");
  }
  for (int t : targets) {
    if (t < 0 || static_cast<std::size_t>(t) >= num_classes()) {
      throw Error(ErrorCode::kOutOfRange, "label " + std::to_string(t) + " outside [0, " +
                                              std::to_string(num_classes()) + ")");
    }
  }
  for (const auto& [index, group] : group_map) {
    if (index >= num_features()) {
      throw Error(ErrorCode::kOutOfRange, "group member index out of range in group " + group);
    }
  }
}

// ---------------------------------------------------------------------------
// Cost schedule

CostSchedule::CostSchedule(std::vector<double> feature_costs, std::vector<FeatureGroup> groups,
                           std::vector<std::string> feature_names)
    : feature_costs_(std::move(feature_costs)),
      groups_(std::move(groups)),
      feature_names_(std::move(feature_names)) {
  const std::size_t d = feature_costs_.size();
  if (feature_names_.empty()) {
    for (std::size_t j = 0; j < d; ++j) feature_names_.push_back("f" + std::to_string(j));
  }
  if (feature_names_.size() != d) {
    throw Error(ErrorCode::kDimensionMismatch, "cost schedule names do not match feature count");
  }

  constexpr std::size_t kUnassigned = static_cast<std::size_t>(-1);
  std::vector<std::size_t> group_of(d, kUnassigned);
  for (std::size_t g = 0; g < groups_.size(); ++g) {
    auto& group = groups_[g];
    if (!(group.cost > 0.0) || !std::isfinite(group.cost)) {
      throw Error(ErrorCode::kInvalidArgument, "group '" + group.id + "' must have a positive cost");
    }
    if (group.members.empty()) {
      throw Error(ErrorCode::kInvalidArgument, "group '" + group.id + "' has no members");
    }
    std::sort(group.members.begin(), group.members.end());
    for (std::size_t m : group.members) {
      if (m >= d) throw Error(ErrorCode::kOutOfRange, "group '" + group.id + "' member out of range");
      if (group_of[m] != kUnassigned) {
        throw Error(ErrorCode::kInvalidArgument,
                    "feature " + feature_names_[m] + " belongs to more than one group");
      }
      group_of[m] = g;
    }
  }

  unit_of_feature_.assign(d, kUnassigned);
  for (std::size_t j = 0; j < d; ++j) {
    if (unit_of_feature_[j] != kUnassigned) continue;
    AcquisitionUnit unit;
    if (group_of[j] == kUnassigned) {
      if (!(feature_costs_[j] > 0.0) || !std::isfinite(feature_costs_[j])) {
        throw Error(ErrorCode::kInvalidArgument,
                    "feature " + feature_names_[j] + " must have a positive cost");
      }
      unit.name = feature_names_[j];
      unit.cost = feature_costs_[j];
      unit.members = {j};
    } else {
      const auto& group = groups_[group_of[j]];
      unit.name = group.id;
      unit.cost = group.cost;
      unit.members = group.members;
    }
    for (std::size_t m : unit.members) unit_of_feature_[m] = units_.size();
    units_.push_back(std::move(unit));
  }
}

CostSchedule CostSchedule::uniform(std::size_t num_features, double cost) {
  return CostSchedule(std::vector<double>(num_features, cost));
}

std::optional<std::size_t> CostSchedule::find_unit(const std::string& name) const {
  for (std::size_t u = 0; u < units_.size(); ++u) {
    if (units_[u].name == name) return u;
  }
  return std::nullopt;
}

double CostSchedule::total_cost() const {
  double total = 0.0;
  for (const auto& unit : units_) total += unit.cost;
  return total;
}

CostSchedule CostSchedule::scaled(double factor) const {
  if (!(factor > 0.0)) throw Error(ErrorCode::kInvalidArgument, "cost scale must be positive");
  auto costs = feature_costs_;
  for (double& c : costs) c *= factor;
  auto groups = groups_;
  for (auto& g : groups) g.cost *= factor;
  return CostSchedule(std::move(costs), std::move(groups), feature_names_);
}

// ---------------------------------------------------------------------------
// Normalization

NormalizationSpec NormalizationSpec::fit(const Dataset& source, std::string computed_on, int bits) {
  if (source.num_instances() == 0) {
    throw Error(ErrorCode::kEmptySplit, "cannot fit normalization on an empty split");
  }
  if (bits < 1 || bits > 30) throw Error(ErrorCode::kInvalidArgument, "bits must be in [1, 30]");
  NormalizationSpec spec;
  spec.computed_on = std::move(computed_on);
  spec.bits = bits;
  const auto d = source.num_features();
  spec.min.resize(d);
  spec.max.resize(d);
  for (std::size_t j = 0; j < d; ++j) {
    const auto col = source.features.col(static_cast<Eigen::Index>(j));
    spec.min[j] = col.minCoeff();
    spec.max[j] = col.maxCoeff();
  }
  return spec;
}

double NormalizationSpec::upper_bound() const { return 1.0 - std::ldexp(1.0, -bits); }

double NormalizationSpec::normalize_value(std::size_t feature, double raw, bool* clamped) const {
  if (feature >= min.size()) throw Error(ErrorCode::kOutOfRange, "feature index out of range");
  if (!std::isfinite(raw)) throw Error(ErrorCode::kNonFinite, "non-finite feature value");
  const double span = max[feature] - min[feature];
  double v = span > 0.0 ? (raw - min[feature]) / span : 0.0;
  const double hi = upper_bound();
  const bool outside = v < 0.0 || v > 1.0;
  v = std::clamp(v, 0.0, hi);
  if (clamped) *clamped = outside;
  return v;
}

double NormalizationSpec::denormalize_value(std::size_t feature, double value) const {
  return min.at(feature) + value * (max.at(feature) - min.at(feature));
}

Dataset NormalizationSpec::apply(const Dataset& ds) const {
  if (ds.num_features() != min.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "normalization spec width does not match dataset");
  }
  Dataset out = ds;
  for (Eigen::Index i = 0; i < out.features.rows(); ++i) {
    for (Eigen::Index j = 0; j < out.features.cols(); ++j) {
      out.features(i, j) = normalize_value(static_cast<std::size_t>(j), ds.features(i, j));
    }
  }
  return out;
}

std::pair<Dataset, NormalizationSpec> normalize(const Dataset& ds, const Dataset& source,
                                                std::string computed_on, int bits) {
  auto spec = NormalizationSpec::fit(source, std::move(computed_on), bits);
  return {spec.apply(ds), spec};
}

// ---------------------------------------------------------------------------
// Splitting

Splits split(const Dataset& ds, const SplitSpec& spec) {
  const auto valid_fraction = [](double f) { return f > 0.0 && f < 1.0; };
  if (!valid_fraction(spec.test_fraction) || !valid_fraction(spec.validation_fraction) ||
      spec.test_fraction + spec.validation_fraction >= 1.0) {
    throw Error(ErrorCode::kInvalidArgument, "split fractions must lie in (0,1) and sum below 1");
  }
  const std::size_t n = ds.num_instances();
  const auto n_test = static_cast<std::size_t>(std::llround(spec.test_fraction * static_cast<double>(n)));
  const auto n_val =
      static_cast<std::size_t>(std::llround(spec.validation_fraction * static_cast<double>(n)));
  if (n_test == 0 || n_val == 0 || n_test + n_val >= n) {
    throw Error(ErrorCode::kEmptySplit, "dataset of " + std::to_string(n) +
                                            " rows yields an empty split");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(spec.seed);
  std::shuffle(order.begin(), order.end(), rng);

  Splits out;
  out.test_rows.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
  out.validation_rows.assign(order.begin() + static_cast<std::ptrdiff_t>(n_test),
                             order.begin() + static_cast<std::ptrdiff_t>(n_test + n_val));
  out.train_rows.assign(order.begin() + static_cast<std::ptrdiff_t>(n_test + n_val), order.end());
  out.train = ds.subset(out.train_rows);
  out.validation = ds.subset(out.validation_rows);
  out.test = ds.subset(out.test_rows);
  return out;
}

// ---------------------------------------------------------------------------
// Manifest

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open manifest " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, "manifest " + path.string() + ": " + e.what());
  }
  Manifest manifest;
  try {
    if (doc.contains("categorical")) {
      manifest.categorical = doc.at("categorical").get<std::vector<std::string>>();
    }
    if (doc.contains("costs")) {
      for (const auto& [name, cost] : doc.at("costs").items()) manifest.costs[name] = cost.get<double>();
    }
    if (doc.contains("groups")) {
      for (const auto& g : doc.at("groups")) {
        Manifest::Group group;
        group.id = g.at("id").is_string() ? g.at("id").get<std::string>() : g.at("id").dump();
        group.cost = g.at("cost").get<double>();
        group.members = g.at("members").get<std::vector<std::string>>();
        manifest.groups.push_back(std::move(group));
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, "manifest " + path.string() + ": " + e.what());
  }
  return manifest;
}

void write_manifest(const Manifest& manifest, const std::filesystem::path& path) {
  // Keys keep insertion order in the output so generated manifests list
  // features in column order.
  nlohmann::ordered_json doc;
  doc["categorical"] = manifest.categorical;
  doc["costs"] = nlohmann::ordered_json::object();
  for (const auto& [name, cost] : manifest.costs) doc["costs"][name] = cost;
  doc["groups"] = nlohmann::ordered_json::array();
  for (const auto& g : manifest.groups) {
    doc["groups"].push_back({{"id", g.id}, {"cost", g.cost}, {"members", g.members}});
  }
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write manifest " + path.string());
  out << doc.dump(2) << '\n';
  if (!out) throw Error(ErrorCode::kIo, "failed writing manifest " + path.string());
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cell += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cell += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(std::move(cell));
      cell.clear();
    } else if (c != '\r') {
      cell += c;
    }
  }
  cells.push_back(std::move(cell));
  return cells;
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t");
  return s.substr(first, last - first + 1);
}

std::optional<double> parse_number(const std::string& text) {
  if (text.empty()) return std::nullopt;
  // strtod accepts a wider grammar than from_chars on older toolchains.
  char* end = nullptr;
  const double value = std::strtod(text.c_str(), &end);
  if (end != text.c_str() + text.size() || !std::isfinite(value)) return std::nullopt;
  return value;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path, const std::string& target_column,
                 const Manifest* manifest) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open dataset " + path.string());

  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::kParse, "dataset " + path.string() + " is empty");
  auto header = split_csv_line(line);
  for (auto& h : header) h = trim(h);

  const auto target_it = std::find(header.begin(), header.end(), target_column);
  if (target_it == header.end()) {
    throw Error(ErrorCode::kUnknownColumn, "target column '" + target_column + "' not in header");
  }
  const auto target_index = static_cast<std::size_t>(target_it - header.begin());

  std::set<std::string> categorical;
  if (manifest) {
    for (const auto& c : manifest->categorical) {
      if (std::find(header.begin(), header.end(), c) == header.end()) {
        throw Error(ErrorCode::kUnknownColumn, "manifest declares absent categorical column '" + c + "'");
      }
      if (c == target_column) {
        throw Error(ErrorCode::kInvalidArgument, "target column cannot be categorical input");
      }
      categorical.insert(c);
    }
  }

  std::vector<std::vector<std::string>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw Error(ErrorCode::kParse, path.string() + ":" + std::to_string(line_no) + ": expected " +
                                         std::to_string(header.size()) + " cells, got " +
                                         std::to_string(cells.size()));
    }
    for (auto& c : cells) c = trim(c);
    rows.push_back(std::move(cells));
  }

  // Column layout after one-hot expansion.
  struct Column {
    std::size_t source;
    std::optional<std::string> category;
  };
  std::vector<Column> columns;
  Dataset ds;
  ds.name = path.stem().string();
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c == target_index) continue;
    if (categorical.contains(header[c])) {
      std::set<std::string> levels;
      for (const auto& row : rows) levels.insert(row[c]);
      for (const auto& level : levels) {
        ds.group_map[columns.size()] = header[c];
        ds.feature_names.push_back(header[c] + "=" + level);
        columns.push_back({c, level});
      }
    } else {
      ds.feature_names.push_back(header[c]);
      columns.push_back({c, std::nullopt});
    }
  }

  // Labels: numeric labels sort numerically, anything else lexicographically.
  std::vector<std::string> labels;
  labels.reserve(rows.size());
  for (const auto& row : rows) labels.push_back(row[target_index]);
  std::vector<std::string> levels(labels.begin(), labels.end());
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  const bool numeric_labels = std::all_of(levels.begin(), levels.end(),
                                          [](const std::string& s) { return parse_number(s).has_value(); });
  if (numeric_labels) {
    std::sort(levels.begin(), levels.end(), [](const std::string& a, const std::string& b) {
      return *parse_number(a) < *parse_number(b);
    });
  }
  ds.class_names = levels;

  ds.features.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(columns.size()));
  ds.targets.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < columns.size(); ++j) {
      const auto& col = columns[j];
      const auto& cell = rows[i][col.source];
      double value = 0.0;
      if (col.category) {
        value = cell == *col.category ? 1.0 : 0.0;
      } else {
        const auto parsed = parse_number(cell);
        if (!parsed) {
          throw Error(ErrorCode::kParse, path.string() + ":" + std::to_string(i + 2) +
                                             ": non-numeric value '" + cell + "' in column '" +
                                             header[col.source] + "'");
        }
        value = *parsed;
      }
      ds.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = value;
    }
    const auto level = std::find(levels.begin(), levels.end(), labels[i]);
    ds.targets.push_back(static_cast<int>(level - levels.begin()));
  }

  if (manifest) {
    // Surface bad references early, before a cost schedule is built.
    std::set<std::string> known(ds.feature_names.begin(), ds.feature_names.end());
    known.insert(categorical.begin(), categorical.end());
    for (const auto& [name, cost] : manifest->costs) {
      if (!known.contains(name)) {
        throw Error(ErrorCode::kUnknownColumn, "manifest cost references absent column '" + name + "'");
      }
    }
    for (const auto& g : manifest->groups) {
      for (const auto& m : g.members) {
        if (!known.contains(m)) {
          throw Error(ErrorCode::kUnknownColumn,
                      "manifest group '" + g.id + "' references absent column '" + m + "'");
        }
      }
    }
  }

  ds.validate();
  return ds;
}

void write_csv(const Dataset& ds, const std::filesystem::path& path, const std::string& target_column) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write dataset " + path.string());
  for (std::size_t j = 0; j < ds.num_features(); ++j) out << ds.feature_names[j] << ',';
  out << target_column << '\n';
  for (std::size_t i = 0; i < ds.num_instances(); ++i) {
    for (std::size_t j = 0; j < ds.num_features(); ++j) {
      out << format_double(ds.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))) << ',';
    }
    out << ds.class_names.at(static_cast<std::size_t>(ds.targets[i])) << '\n';
  }
  if (!out) throw Error(ErrorCode::kIo, "failed writing dataset " + path.string());
}

CostSchedule build_cost_schedule(const Dataset& ds, const Manifest& manifest) {
  const std::size_t d = ds.num_features();
  std::map<std::string, std::size_t> index_of;
  for (std::size_t j = 0; j < d; ++j) index_of[ds.feature_names[j]] = j;

  std::map<std::string, std::vector<std::size_t>> onehot_members;
  for (const auto& [feature, group] : ds.group_map) onehot_members[group].push_back(feature);

  std::vector<double> costs(d, 1.0);
  for (const auto& [name, cost] : manifest.costs) {
    if (auto it = index_of.find(name); it != index_of.end()) {
      costs[it->second] = cost;
    } else if (!onehot_members.contains(name)) {
      throw Error(ErrorCode::kUnknownColumn, "cost for absent column '" + name + "'");
    }
  }

  std::vector<FeatureGroup> groups;
  std::set<std::string> declared;
  for (const auto& g : manifest.groups) {
    FeatureGroup group{g.id, g.cost, {}};
    for (const auto& member : g.members) {
      if (auto it = index_of.find(member); it != index_of.end()) {
        group.members.push_back(it->second);
      } else if (auto oh = onehot_members.find(member); oh != onehot_members.end()) {
        group.members.insert(group.members.end(), oh->second.begin(), oh->second.end());
        declared.insert(member);
      } else {
        throw Error(ErrorCode::kUnknownColumn,
                    "group '" + g.id + "' references absent column '" + member + "'");
      }
    }
    declared.insert(g.id);
    groups.push_back(std::move(group));
  }
  // One-hot columns not covered by an explicit group become a group of their own.
  for (const auto& [source, members] : onehot_members) {
    if (declared.contains(source)) continue;
    const auto cost_it = manifest.costs.find(source);
    groups.push_back({source, cost_it != manifest.costs.end() ? cost_it->second : 1.0, members});
  }
  return CostSchedule(std::move(costs), std::move(groups), ds.feature_names);
}

Manifest manifest_for(const CostSchedule& costs) {
  Manifest manifest;
  std::vector<bool> grouped(costs.num_features(), false);
  for (const auto& g : costs.groups()) {
    Manifest::Group group{g.id, g.cost, {}};
    for (std::size_t m : g.members) {
      group.members.push_back(costs.feature_names()[m]);
      grouped[m] = true;
    }
    manifest.groups.push_back(std::move(group));
  }
  for (std::size_t j = 0; j < costs.num_features(); ++j) {
    if (!grouped[j]) manifest.costs[costs.feature_names()[j]] = costs.feature_costs()[j];
  }
  return manifest;
}

// ---------------------------------------------------------------------------
// Synthesized clusters

SynthesizedData generate_synthesized(std::uint64_t seed, const SynthConfig& config) {
  if (config.centers < 1 || config.informative_features < 1 || config.noise_features < 0 ||
      config.points_per_center < 1 || config.classes < 2 || !(config.cluster_variance > 0.0) ||
      !(config.center_high > config.center_low)) {
    throw Error(ErrorCode::kInvalidArgument, "invalid synthesized dataset configuration");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> center_draw(config.center_low, config.center_high);
  std::normal_distribution<double> cluster_noise(0.0, std::sqrt(config.cluster_variance));
  std::normal_distribution<double> standard_normal(0.0, 1.0);
  std::uniform_int_distribution<int> class_draw(0, config.classes - 1);

  const int informative = config.informative_features;
  const int d = informative + config.noise_features;
  const int n = config.centers * config.points_per_center;

  RowMatrix centers(config.centers, informative);
  for (int c = 0; c < config.centers; ++c) {
    for (int j = 0; j < informative; ++j) centers(c, j) = center_draw(rng);
  }
  std::vector<int> cluster_class(static_cast<std::size_t>(config.centers));
  for (auto& k : cluster_class) k = class_draw(rng);

  Dataset ds;
  ds.name = "synthesized";
  ds.features.resize(n, d);
  ds.targets.reserve(static_cast<std::size_t>(n));
  int row = 0;
  for (int c = 0; c < config.centers; ++c) {
    for (int p = 0; p < config.points_per_center; ++p, ++row) {
      for (int j = 0; j < informative; ++j) ds.features(row, j) = centers(c, j) + cluster_noise(rng);
      for (int j = informative; j < d; ++j) ds.features(row, j) = standard_normal(rng);
      ds.targets.push_back(cluster_class[static_cast<std::size_t>(c)]);
    }
  }
  for (int j = 0; j < d; ++j) {
    ds.feature_names.push_back(j < informative ? "x" + std::to_string(j)
                                               : "noise" + std::to_string(j - informative));
  }
  for (int k = 0; k < config.classes; ++k) ds.class_names.push_back(std::to_string(k));

  // Each half is priced 1..half_width in column order.
  std::vector<double> costs(static_cast<std::size_t>(d));
  for (int j = 0; j < d; ++j) costs[static_cast<std::size_t>(j)] = j < informative ? j + 1 : j - informative + 1;
  CostSchedule schedule(std::move(costs), {}, ds.feature_names);
  return {std::move(ds), std::move(schedule), std::move(centers), std::move(cluster_class)};
}

std::uint64_t fingerprint(const Dataset& ds) {
  std::uint64_t hash = 1469598103934665603ULL;
  const auto mix = [&hash](const void* data, std::size_t len) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      hash ^= bytes[i];
      hash *= 1099511628211ULL;
    }
  };
  for (Eigen::Index i = 0; i < ds.features.rows(); ++i) {
    for (Eigen::Index j = 0; j < ds.features.cols(); ++j) {
      const double v = ds.features(i, j);
      mix(&v, sizeof v);
    }
  }
  for (int t : ds.targets) mix(&t, sizeof t);
  for (const auto& name : ds.feature_names) mix(name.data(), name.size());
  return hash;
}

}  // namespace fact
