// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "fact/eval.hpp"
#include "fact/model.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace fact {

enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 2,
  kExitDivergence = 3,
  kExitIo = 4,
};

/// Default run configuration; every key may be overridden with --set.
nlohmann::json default_config();

/// Applies "a.b.c=value". The value is parsed as JSON when possible and
/// taken as a string otherwise.
void apply_override(nlohmann::json& config, const std::string& assignment);

/// Recursively overlays `patch` onto `base`; unknown keys are rejected.
void merge_config(nlohmann::json& base, const nlohmann::json& patch, const std::string& prefix = "");

struct RunConfig {
  std::uint64_t seed = 0;

  std::string data_kind = "synthesized";  // or "csv"
  std::filesystem::path data_path;
  std::string target = "label";
  std::filesystem::path manifest_path;
  SynthConfig synth;

  SplitSpec split;
  std::vector<int> encoder_hidden{16, 10};
  std::vector<int> predictor_hidden{8, 4};
  int bits = kDefaultBits;
  CorruptionConfig corruption;
  TrainConfig training;

  std::vector<std::string> policies{"fact", "random", "static"};
  std::optional<bool> static_cost_normalized;
  StoppingRule stopping = StoppingRule::exhaustion();
  std::vector<std::uint64_t> eval_seeds{0};
  unsigned threads = 0;

  std::filesystem::path out = "out";
  std::filesystem::path bundle;

  std::string host = "127.0.0.1";
  int port = 8080;
  int idle_timeout_seconds = 3600;
  std::filesystem::path event_log;

  std::vector<std::pair<double, double>> sweep;
  std::size_t order_instances = 200;
  std::string order_policy = "fact";

  std::filesystem::path bundle_dir() const { return bundle.empty() ? out / "bundle" : bundle; }

  /// Throws Error(kInvalidArgument) on any invalid or missing field.
  static RunConfig from_json(const nlohmann::json& doc);
};

/// Loaded dataset with its splits normalized on the training split.
struct PreparedData {
  Dataset raw;
  CostSchedule costs;
  TrainingInputs inputs;
  Dataset test;  // normalized
};

PreparedData prepare_data(const RunConfig& config);

ArchitectureSpec architecture_for(const RunConfig& config, const PreparedData& data);

std::vector<NamedPolicy> make_policies(const RunConfig& config, const ModelBundle& bundle,
                                       const PreparedData& data);

/// Full command-line entry point; returns the process exit code.
int run_cli(int argc, char** argv);

}  // namespace fact
