// SPDX-License-Identifier: Apache-2.0
#include "fact/cli.hpp"

#include "fact/baselines.hpp"
#include "fact/error.hpp"
#include "fact/service.hpp"

#include <CLI11.hpp>
#include <httplib.h>

#include <chrono>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <pthread.h>
#include <thread>

namespace fact {

using nlohmann::json;

json default_config() {
  return {
      {"seed", nullptr},
      {"data",
       {{"kind", "synthesized"},
        {"path", ""},
        {"target", "label"},
        {"manifest", ""},
        {"synth",
         {{"centers", 16},
          {"informative_features", 32},
          {"noise_features", 32},
          {"points_per_center", 1000},
          {"classes", 2},
          {"cluster_variance", 0.25},
          {"center_low", 0.0},
          {"center_high", 1.0}}}}},
      {"split", {{"test_fraction", 0.15}, {"validation_fraction", 0.15}}},
      {"architecture", {{"encoder_hidden", {16, 10}}, {"predictor_hidden", {8, 4}}, {"bits", 8}}},
      {"corruption", {{"alpha", 1.5}, {"beta", 1.5}}},
      {"optimizer", {{"learning_rate", 1e-3}, {"beta1", 0.9}, {"beta2", 0.999}, {"epsilon", 1e-8}}},
      {"training", {{"batch_size", 128}, {"max_epochs", 200}, {"patience", 10}, {"encoder_lr_multiplier", 0.1}}},
      {"evaluation",
       {{"policies", {"fact", "random", "static"}},
        {"static_cost_normalized", nullptr},
        {"stopping", {{"rule", "exhaustion"}, {"threshold", nullptr}}},
        {"seeds", nullptr},
        {"threads", 0}}},
      {"out", "out"},
      {"bundle", ""},
      {"serve", {{"host", "127.0.0.1"}, {"port", 8080}, {"idle_timeout_seconds", 3600}, {"event_log", ""}}},
      {"beta_sweep", {{"parameters", {{1.5, 1.5}, {3.5, 1.5}, {5.5, 1.5}}}}},
      {"order_matrix", {{"instances", 200}, {"policy", "fact"}}},
  };
}

void merge_config(json& base, const json& patch, const std::string& prefix) {
  if (!patch.is_object()) throw Error(ErrorCode::kInvalidArgument, "config must be a JSON object");
  for (const auto& [key, value] : patch.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!base.contains(key)) throw Error(ErrorCode::kInvalidArgument, "unknown config key '" + path + "'");
    json& slot = base[key];
    if (slot.is_object() && value.is_object()) {
      merge_config(slot, value, path);
    } else {
      slot = value;
    }
  }
}

void apply_override(json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw Error(ErrorCode::kInvalidArgument, "--set expects key=value, got '" + assignment + "'");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  json patch = value;
  std::vector<std::string> parts;
  for (std::size_t start = 0;;) {
    const auto dot = key.find('.', start);
    parts.push_back(key.substr(start, dot - start));
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) patch = json{{*it, patch}};
  merge_config(config, patch);
}

namespace {

template <typename T>
T get(const json& doc, const char* key, const std::string& where) {
  try {
    return doc.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::kInvalidArgument, "config '" + where + "." + key + "' has the wrong type");
  }
}

StoppingRule stopping_from_json(const json& doc) {
  const auto rule = get<std::string>(doc, "rule", "evaluation.stopping");
  const auto threshold = [&] {
    if (doc.at("threshold").is_null()) {
      throw Error(ErrorCode::kInvalidArgument, "stopping rule '" + rule + "' needs a threshold");
    }
    return get<double>(doc, "threshold", "evaluation.stopping");
  };
  if (rule == "exhaustion") return StoppingRule::exhaustion();
  if (rule == "budget") return StoppingRule::budget(threshold());
  if (rule == "confidence") return StoppingRule::confidence(threshold());
  if (rule == "accuracy_fraction") return StoppingRule::accuracy_fraction(threshold());
  throw Error(ErrorCode::kInvalidArgument, "unknown stopping rule '" + rule + "'");
}

}  // namespace

RunConfig RunConfig::from_json(const json& input) {
  json doc = default_config();
  merge_config(doc, input);

  RunConfig c;
  if (doc.at("seed").is_null()) throw Error(ErrorCode::kInvalidArgument, "a seed is required (--seed or config 'seed')");
  c.seed = get<std::uint64_t>(doc, "seed", "");

  const auto& data = doc.at("data");
  c.data_kind = get<std::string>(data, "kind", "data");
  c.data_path = get<std::string>(data, "path", "data");
  c.target = get<std::string>(data, "target", "data");
  c.manifest_path = get<std::string>(data, "manifest", "data");
  const auto& synth = data.at("synth");
  c.synth.centers = get<int>(synth, "centers", "data.synth");
  c.synth.informative_features = get<int>(synth, "informative_features", "data.synth");
  c.synth.noise_features = get<int>(synth, "noise_features", "data.synth");
  c.synth.points_per_center = get<int>(synth, "points_per_center", "data.synth");
  c.synth.classes = get<int>(synth, "classes", "data.synth");
  c.synth.cluster_variance = get<double>(synth, "cluster_variance", "data.synth");
  c.synth.center_low = get<double>(synth, "center_low", "data.synth");
  c.synth.center_high = get<double>(synth, "center_high", "data.synth");
  if (c.data_kind != "synthesized" && c.data_kind != "csv") {
    throw Error(ErrorCode::kInvalidArgument, "data.kind must be 'synthesized' or 'csv'");
  }
  if (c.data_kind == "csv") {
    if (c.data_path.empty()) throw Error(ErrorCode::kInvalidArgument, "data.path is required for csv data");
    if (!std::filesystem::exists(c.data_path)) {
      throw Error(ErrorCode::kIo, "dataset " + c.data_path.string() + " does not exist");
    }
    if (!c.manifest_path.empty() && !std::filesystem::exists(c.manifest_path)) {
      throw Error(ErrorCode::kIo, "manifest " + c.manifest_path.string() + " does not exist");
    }
  }

  const auto& split = doc.at("split");
  c.split.test_fraction = get<double>(split, "test_fraction", "split");
  c.split.validation_fraction = get<double>(split, "validation_fraction", "split");
  c.split.seed = c.seed;

  const auto& arch = doc.at("architecture");
  c.encoder_hidden = get<std::vector<int>>(arch, "encoder_hidden", "architecture");
  c.predictor_hidden = get<std::vector<int>>(arch, "predictor_hidden", "architecture");
  c.bits = get<int>(arch, "bits", "architecture");

  const auto& corruption = doc.at("corruption");
  c.corruption.alpha = get<double>(corruption, "alpha", "corruption");
  c.corruption.beta = get<double>(corruption, "beta", "corruption");
  c.corruption.seed = c.seed;
  c.corruption.validate();

  const auto& opt = doc.at("optimizer");
  c.training.optimizer.learning_rate = get<double>(opt, "learning_rate", "optimizer");
  c.training.optimizer.beta1 = get<double>(opt, "beta1", "optimizer");
  c.training.optimizer.beta2 = get<double>(opt, "beta2", "optimizer");
  c.training.optimizer.epsilon = get<double>(opt, "epsilon", "optimizer");
  c.training.optimizer.validate();

  const auto& training = doc.at("training");
  c.training.batch_size = get<int>(training, "batch_size", "training");
  c.training.max_epochs = get<int>(training, "max_epochs", "training");
  c.training.patience = get<int>(training, "patience", "training");
  c.training.encoder_lr_multiplier = get<double>(training, "encoder_lr_multiplier", "training");
  c.training.seed = c.seed;
  if (c.training.batch_size < 1 || c.training.max_epochs < 1 || c.training.patience < 1) {
    throw Error(ErrorCode::kInvalidArgument, "training batch_size, max_epochs and patience must be positive");
  }

  const auto& eval = doc.at("evaluation");
  c.policies = get<std::vector<std::string>>(eval, "policies", "evaluation");
  for (const auto& p : c.policies) {
    if (p != "fact" && p != "random" && p != "static" && p != "exhaustive") {
      throw Error(ErrorCode::kInvalidArgument, "unknown policy '" + p + "'");
    }
  }
  if (!eval.at("static_cost_normalized").is_null()) {
    c.static_cost_normalized = get<bool>(eval, "static_cost_normalized", "evaluation");
  }
  c.stopping = stopping_from_json(eval.at("stopping"));
  c.eval_seeds = eval.at("seeds").is_null() ? std::vector<std::uint64_t>{c.seed}
                                            : get<std::vector<std::uint64_t>>(eval, "seeds", "evaluation");
  if (c.eval_seeds.empty()) throw Error(ErrorCode::kInvalidArgument, "evaluation.seeds must not be empty");
  c.threads = get<unsigned>(eval, "threads", "evaluation");

  c.out = get<std::string>(doc, "out", "");
  c.bundle = get<std::string>(doc, "bundle", "");

  const auto& serve = doc.at("serve");
  c.host = get<std::string>(serve, "host", "serve");
  c.port = get<int>(serve, "port", "serve");
  c.idle_timeout_seconds = get<int>(serve, "idle_timeout_seconds", "serve");
  c.event_log = get<std::string>(serve, "event_log", "serve");
  if (c.port < 0 || c.port > 65535) throw Error(ErrorCode::kInvalidArgument, "serve.port out of range");

  c.sweep = get<std::vector<std::pair<double, double>>>(doc.at("beta_sweep"), "parameters", "beta_sweep");
  c.order_instances = get<std::size_t>(doc.at("order_matrix"), "instances", "order_matrix");
  c.order_policy = get<std::string>(doc.at("order_matrix"), "policy", "order_matrix");
  return c;
}

PreparedData prepare_data(const RunConfig& config) {
  PreparedData out;
  if (config.data_kind == "synthesized") {
    auto synth = generate_synthesized(config.seed, config.synth);
    out.raw = std::move(synth.dataset);
    out.costs = std::move(synth.costs);
  } else {
    std::optional<Manifest> manifest;
    if (!config.manifest_path.empty()) manifest = read_manifest(config.manifest_path);
    out.raw = load_csv(config.data_path, config.target, manifest ? &*manifest : nullptr);
    out.costs = build_cost_schedule(out.raw, manifest ? *manifest : Manifest{});
  }
  out.raw.validate();
  const Splits splits = split(out.raw, config.split);
  const auto normalization = NormalizationSpec::fit(splits.train, "train", config.bits);
  out.inputs.train = normalization.apply(splits.train);
  out.inputs.validation = normalization.apply(splits.validation);
  out.inputs.normalization = normalization;
  out.inputs.costs = out.costs;
  out.inputs.dataset_fingerprint = fingerprint(out.raw);
  out.test = normalization.apply(splits.test);
  return out;
}

ArchitectureSpec architecture_for(const RunConfig& config, const PreparedData& data) {
  return ArchitectureSpec::make(data.raw.num_features(), config.encoder_hidden, config.predictor_hidden,
                                static_cast<int>(data.raw.num_classes()), config.bits);
}

std::vector<NamedPolicy> make_policies(const RunConfig& config, const ModelBundle& bundle,
                                       const PreparedData& data) {
  std::vector<NamedPolicy> out;
  for (const auto& name : config.policies) {
    if (name == "fact") {
      out.push_back({name, [](std::uint64_t) { return std::make_unique<FactPolicy>(); }});
    } else if (name == "random") {
      out.push_back({name, [](std::uint64_t seed) { return std::make_unique<RandomPolicy>(seed); }});
    } else if (name == "static") {
      const bool normalized = config.static_cost_normalized.value_or(!has_uniform_costs(bundle.costs));
      auto order = std::make_shared<StaticOrder>(static_mi_order(data.inputs.train, bundle.costs, normalized));
      out.push_back({name, [order](std::uint64_t) { return std::make_unique<StaticPolicy>(*order); }});
    } else if (name == "exhaustive") {
      auto hist = std::make_shared<HistogramModel>(HistogramModel::fit(data.inputs.train));
      out.push_back({name, [hist](std::uint64_t) { return std::make_unique<ExhaustivePolicy>(*hist); }});
    } else {
      throw Error(ErrorCode::kInvalidArgument, "unknown policy '" + name + "'");
    }
  }
  return out;
}

namespace {

void write_json(const json& doc, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << doc.dump(2) << '\n';
  if (!out) throw Error(ErrorCode::kIo, "failed writing " + path.string());
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create " + dir.string() + ": " + ec.message());
}

json log_json(const std::vector<EpochLog>& epochs) {
  json out = json::array();
  for (const auto& e : epochs) {
    out.push_back({{"epoch", e.epoch},
                   {"train_loss", e.train_loss},
                   {"validation", e.validation},
                   {"best_validation", e.best_validation}});
  }
  return out;
}

ModelBundle load_checked_bundle(const RunConfig& config, const PreparedData& data) {
  const auto dir = config.bundle_dir();
  if (!std::filesystem::exists(dir / "manifest.json")) {
    throw Error(ErrorCode::kIo, "no bundle at " + dir.string() + " (run `train` first)");
  }
  ModelBundle bundle = load_bundle(dir);
  if (bundle.dataset_fingerprint != data.inputs.dataset_fingerprint) {
    throw Error(ErrorCode::kInvalidArgument, "bundle at " + dir.string() + " was trained on a different dataset");
  }
  return bundle;
}

int cmd_gen_synth(const RunConfig& config) {
  ensure_dir(config.out);
  const auto synth = generate_synthesized(config.seed, config.synth);
  write_csv(synth.dataset, config.out / "synth.csv", "label");
  write_manifest(manifest_for(synth.costs), config.out / "synth_manifest.json");
  std::fprintf(stderr, "wrote %zu rows to %s\n", synth.dataset.num_instances(),
               (config.out / "synth.csv").string().c_str());
  return kExitOk;
}

int cmd_train(const RunConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  const PreparedData data = prepare_data(config);
  const auto arch = architecture_for(config, data);
  TrainingLog log;
  const ModelBundle bundle = train_model(data.inputs, arch, config.corruption, config.training, &log);
  ensure_dir(config.out);
  save_bundle(bundle, config.bundle_dir());
  const double accuracy = full_feature_accuracy(bundle, data.test);
  const double denoising = denoising_percentage(bundle, data.test, config.corruption);
  write_json({{"schema_version", 1},
              {"autoencoder", log_json(log.autoencoder)},
              {"predictor", log_json(log.predictor)},
              {"test_full_feature_accuracy", accuracy},
              {"test_denoising_percentage", denoising}},
             config.out / "training_log.json");
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::fprintf(stderr, "trained in %.1fs: %zu+%zu epochs, full-feature accuracy %.4f, denoising %.1f%%\n", seconds,
               log.autoencoder.size(), log.predictor.size(), accuracy, denoising);
  return kExitOk;
}

int cmd_simulate(const RunConfig& config) {
  const PreparedData data = prepare_data(config);
  const ModelBundle bundle = load_checked_bundle(config, data);
  const auto policies = make_policies(config, bundle, data);
  const ModelBundle* bundles[] = {&bundle};
  const auto report = compare_policies(bundles, data.test, policies, config.eval_seeds, config.stopping, config.threads);
  ensure_dir(config.out);
  for (const auto& curve : report.curves) write_curve_csv(curve, config.out / ("curve_" + curve.policy + ".csv"));
  write_curves_csv(report, config.out / "curves.csv");
  write_json(summary_json(report), config.out / "summary.json");
  for (const auto& p : policies) {
    if (p.name == "static") {
      const auto policy = p.make(0);
      write_static_order_csv(static_cast<const StaticPolicy&>(*policy).order(), bundle.costs,
                             config.out / "static_order.csv");
    }
  }
  for (const auto& s : report.policies) {
    std::fprintf(stderr, "%-11s AUACC %.4f  accuracy@25%% %.4f  max %.4f\n", s.policy.c_str(), s.auacc,
                 s.accuracy_at_fraction[1], s.max_accuracy);
  }
  return kExitOk;
}

int cmd_order_matrix(const RunConfig& config) {
  const PreparedData data = prepare_data(config);
  const ModelBundle bundle = load_checked_bundle(config, data);
  RunConfig one = config;
  one.policies = {config.order_policy};
  const auto policies = make_policies(one, bundle, data);
  const auto policy = policies.front().make(config.seed);
  const std::size_t n = std::min(config.order_instances, data.test.num_instances());
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), 0);
  const auto matrix = acquisition_order_matrix(bundle, data.test.subset(rows), *policy, config.stopping, config.threads);
  ensure_dir(config.out);
  write_order_matrix_csv(matrix, bundle.feature_names, config.out / "order_matrix.csv");
  return kExitOk;
}

int cmd_beta_sweep(const RunConfig& config) {
  const PreparedData data = prepare_data(config);
  const auto result = beta_sweep(data.inputs, data.test, architecture_for(config, data), config.sweep,
                                 config.training, config.seed, config.threads);
  ensure_dir(config.out);
  std::ofstream csv(config.out / "beta_sweep.csv");
  if (!csv) throw Error(ErrorCode::kIo, "cannot write beta_sweep.csv");
  csv << "alpha,beta,auacc,full_accuracy,denoising\n";
  json rows = json::array();
  char buf[160];
  for (const auto& r : result.rows) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g\n", r.alpha, r.beta, r.auacc, r.full_accuracy,
                  r.denoising);
    csv << buf;
    rows.push_back({{"alpha", r.alpha},
                    {"beta", r.beta},
                    {"auacc", r.auacc},
                    {"full_accuracy", r.full_accuracy},
                    {"denoising", r.denoising}});
  }
  write_json({{"schema_version", 1}, {"rows", rows}, {"spread", result.spread}}, config.out / "beta_sweep.json");
  std::fprintf(stderr, "AUACC spread across %zu settings: %.4f\n", result.rows.size(), result.spread);
  return kExitOk;
}

int cmd_serve(const RunConfig& config) {
  const auto dir = config.bundle_dir();
  if (!std::filesystem::exists(dir / "manifest.json")) throw Error(ErrorCode::kIo, "no bundle at " + dir.string());
  const ModelBundle bundle = load_bundle(dir);
  ServiceConfig sc;
  sc.idle_timeout = std::chrono::seconds(config.idle_timeout_seconds);
  const bool resume = !config.event_log.empty() && std::filesystem::exists(config.event_log);
  if (!config.event_log.empty()) sc.event_log = config.event_log;
  SessionService service(bundle, sc);
  if (resume) std::fprintf(stderr, "restored %zu sessions from %s\n", service.replay(config.event_log),
                           config.event_log.string().c_str());

  httplib::Server server;
  mount(server, service);

  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);
  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    server.stop();
  });

  if (!server.bind_to_port(config.host, config.port)) {
    pthread_kill(waiter.native_handle(), SIGTERM);
    waiter.join();
    throw Error(ErrorCode::kIo, "cannot bind " + config.host + ":" + std::to_string(config.port));
  }
  std::fprintf(stderr, "serving %s on http://%s:%d/v1\n", dir.string().c_str(), config.host.c_str(), config.port);
  server.listen_after_bind();
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  return kExitOk;
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kIo:
      return kExitIo;
    case ErrorCode::kDivergence:
    case ErrorCode::kNonFinite:
      return kExitDivergence;
    default:
      return kExitConfig;
  }
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Cost-aware test-time feature acquisition"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string bundle;
  std::vector<std::string> sets;
  std::optional<int> port;

  const auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
    cmd->add_option("--seed", seed, "Master seed");
    cmd->add_option("--out", out, "Output directory");
    cmd->add_option("--set", sets, "Override a config key (dotted.path=value)")->take_all();
  };
  struct Command {
    const char* name;
    const char* help;
    int (*run)(const RunConfig&);
  };
  const Command commands[] = {
      {"gen-synth", "Write the synthesized dataset and its cost manifest", cmd_gen_synth},
      {"train", "Train the autoencoder and predictor; write the bundle", cmd_train},
      {"simulate", "Compare acquisition policies on the test split", cmd_simulate},
      {"serve", "Serve interactive acquisition sessions over HTTP", cmd_serve},
      {"order-matrix", "Write per-instance acquisition ranks", cmd_order_matrix},
      {"beta-sweep", "Retrain across corruption settings and compare AUACC", cmd_beta_sweep},
  };
  int (*selected)(const RunConfig&) = nullptr;
  for (const auto& c : commands) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    add_common(sub);
    if (std::string(c.name) != "gen-synth") sub->add_option("--bundle", bundle, "Bundle directory");
    if (std::string(c.name) == "serve") sub->add_option("--port", port, "Listen port");
    sub->callback([&selected, run = c.run] { selected = run; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    json doc = json::object();
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw Error(ErrorCode::kIo, "cannot read " + config_path);
      try {
        doc = json::parse(in);
      } catch (const json::exception& e) {
        throw Error(ErrorCode::kInvalidArgument, config_path + ": " + e.what());
      }
    }
    json merged = default_config();
    merge_config(merged, doc);
    for (const auto& s : sets) apply_override(merged, s);
    if (seed) merged["seed"] = *seed;
    if (!out.empty()) merged["out"] = out;
    if (!bundle.empty()) merged["bundle"] = bundle;
    if (port) merged["serve"]["port"] = *port;
    if (selected == cmd_serve && merged["seed"].is_null()) merged["seed"] = 0;
    const RunConfig config = RunConfig::from_json(merged);
    return selected(config);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitIo;
  }
}

}  // namespace fact
