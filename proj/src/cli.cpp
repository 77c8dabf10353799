#include "eanas/cli.hpp"

#include <cmath>
#include <filesystem>
#include <iostream>
#include <limits>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "eanas/arch_space.hpp"
#include "eanas/data_io.hpp"
#include "eanas/energy_estimator.hpp"
#include "eanas/errors.hpp"
#include "eanas/experiments.hpp"
#include "eanas/search.hpp"
#include "eanas/util.hpp"

namespace eanas {

namespace fs = std::filesystem;

namespace {

struct GlobalOptions {
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  std::string out_dir = "out";
  bool no_create_out_dir = false;
};

// Collects inputs/outputs of one command and writes manifest.json last.
class RunContext {
 public:
  RunContext(std::string command, const GlobalOptions& global) : command_(std::move(command)), global_(global) {
    out_dir_ = global.out_dir;
    if (!fs::exists(out_dir_)) {
      if (global.no_create_out_dir) throw DataError("output directory does not exist: " + out_dir_.string());
      fs::create_directories(out_dir_);
    } else if (!fs::is_directory(out_dir_)) {
      throw DataError("output path is not a directory: " + out_dir_.string());
    }
    seeds_["root"] = global.seed;
  }

  void input(const fs::path& path) { inputs_[path.generic_string()] = sha256_file(path); }
  void seed(const std::string& name, std::uint64_t value) { seeds_[name] = value; }
  nlohmann::json& summary() { return summary_; }

  fs::path write(const std::string& name, const std::string& contents) {
    const fs::path path = out_dir_ / name;
    write_text_file(path, contents);
    outputs_.push_back(name);
    return path;
  }

  void finish(const std::string& resolved_config) {
    nlohmann::json m;
    m["command"] = command_;
    m["tool_version"] = kToolVersion;
    m["config"] = resolved_config;
    m["seeds"] = seeds_;
    m["inputs"] = inputs_;
    m["outputs"] = outputs_;
    m["summary"] = summary_;
    write_text_file(out_dir_ / "manifest.json", m.dump(2) + "\n");
  }

 private:
  std::string command_;
  GlobalOptions global_;
  fs::path out_dir_;
  nlohmann::json inputs_ = nlohmann::json::object();
  nlohmann::json seeds_ = nlohmann::json::object();
  nlohmann::json summary_ = nlohmann::json::object();
  std::vector<std::string> outputs_;
};

nlohmann::json read_json_file(const fs::path& path) {
  try {
    return nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

// Keep global options and the ones of the chosen subcommand path.
std::string resolved_config(CLI::App& app, const std::string& prefix) {
  std::istringstream in(app.config_to_str(true, false));
  std::string out;
  for (std::string line; std::getline(in, line);) {
    const std::string key = line.substr(0, line.find('='));
    if (key.find('.') == std::string::npos || key.rfind(prefix, 0) == 0) out += line + "\n";
  }
  return out;
}

std::string dump(const nlohmann::json& j) { return j.dump(2) + "\n"; }

double parse_budget(const std::string& text) {
  if (text == "inf" || text == "infinity" || text == "none") return std::numeric_limits<double>::infinity();
  const double v = parse_double(text, "budget");
  if (!(v > 0.0)) throw UsageError("--budget must be > 0 or 'inf'");
  return v;
}

void add_estimator_options(CLI::App* sub, EstimatorConfig& cfg) {
  sub->add_option("--hidden", cfg.hidden_layers, "Hidden layer widths")->capture_default_str();
  sub->add_option("--pretrain-epochs", cfg.pretrain.epochs)->capture_default_str();
  sub->add_option("--pretrain-lr", cfg.pretrain.learning_rate)->capture_default_str();
  sub->add_option("--batch-size", cfg.pretrain.batch_size)->capture_default_str();
  sub->add_option("--finetune-epochs", cfg.finetune.epochs)->capture_default_str();
  sub->add_option("--finetune-lr", cfg.finetune.learning_rate)->capture_default_str();
  sub->add_option("--l2", cfg.pretrain.l2_penalty, "L2 penalty (pretraining and fine-tuning)")->capture_default_str();
}

nlohmann::json proxy_to_json(const Network& net, const nlohmann::json& provenance) {
  return {{"format_version", 1}, {"kind", "map_proxy"}, {"network", network_to_json(net)}, {"provenance", provenance}};
}

Network proxy_from_json(const nlohmann::json& j) {
  if (j.contains("kind")) {
    if (j.at("kind") != "map_proxy") throw DataError("proxy file has kind '" + j.at("kind").dump() + "'");
    return network_from_json(j.at("network"));
  }
  return network_from_json(j);
}

// ---- synth ----------------------------------------------------------------

struct SynthOptions {
  std::string family = "constant_offset";
  std::vector<std::string> devices{"cpu", "gpu", "npu"};
  std::vector<double> offsets{0.0, 0.3, 0.7};
  std::vector<double> scales{1.0, 1.5, 2.0};
  std::vector<double> betas{0.0, 0.2, 0.4};
  std::size_t n_archs = 500;
  double noise_sd = 0.01;
  double accuracy_noise_sd = 0.005;
};

void cmd_synth(const SynthOptions& o, const GlobalOptions& g, const std::string& config) {
  if (o.n_archs == 0) throw UsageError("--n-archs must be >= 1");
  if (o.devices.empty()) throw UsageError("--devices needs at least one name");
  auto per_device = [&](const std::vector<double>& v, const char* name) {
    if (v.size() != o.devices.size()) {
      throw UsageError(std::string("--") + name + " needs one value per device (" + std::to_string(o.devices.size()) +
                       ")");
    }
  };
  per_device(o.offsets, "offsets");
  per_device(o.scales, "scales");
  per_device(o.betas, "betas");
  if (!(o.noise_sd >= 0.0) || !(o.accuracy_noise_sd >= 0.0)) throw UsageError("noise sd must be >= 0");

  RunContext ctx("synth", g);
  SyntheticOracleConfig cfg;
  cfg.family = parse_oracle_family(o.family);
  for (std::size_t i = 0; i < o.devices.size(); ++i) {
    cfg.devices.push_back({o.devices[i], o.offsets[i], o.scales[i], o.betas[i]});
  }
  cfg.noise_sd = o.noise_sd;
  cfg.rng_seed = derive_seed(g.seed, "synth.noise");
  const std::uint64_t arch_seed = derive_seed(g.seed, "synth.archs");
  const std::uint64_t acc_seed = derive_seed(g.seed, "synth.accuracy");
  ctx.seed("synth.archs", arch_seed);
  ctx.seed("synth.noise", cfg.rng_seed);
  ctx.seed("synth.accuracy", acc_seed);

  const auto archs = sample_distinct(arch_seed, o.n_archs);
  const EnergyDataset ds = generate_synthetic(cfg, archs);
  ctx.write("energy.csv", energy_csv_text(ds));
  ctx.write("archs.json", arch_table_to_text(ds.archs()));
  ctx.write("registry.json", registry_to_text(ds.registry()));

  std::mt19937_64 rng(acc_seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<AccuracyRecord> accuracy;
  for (const auto& e : ds.archs()) accuracy.push_back({e.id, synthetic_accuracy(*e.arch) + o.accuracy_noise_sd * noise(rng)});
  ctx.write("accuracy.csv", accuracy_csv_text(accuracy));

  nlohmann::json truth = oracle_config_to_json(cfg);
  truth["accuracy_noise_sd"] = o.accuracy_noise_sd;
  truth["accuracy_seed"] = acc_seed;
  truth["energy_formula"] = std::string(oracle_family_name(cfg.family));
  ctx.write("ground_truth.json", dump(truth));

  ctx.summary()["records"] = ds.records().size();
  ctx.summary()["archs"] = ds.archs().size();
  ctx.summary()["dataset_hash"] = dataset_hash(ds);
  ctx.finish(config);
}

// ---- fit ------------------------------------------------------------------

struct FitOptions {
  std::string data_dir;
  std::string target;
  std::size_t n_target = 10;
  std::string model = "two_stage";
  std::vector<std::string> sources;
  std::string stats_from = "pool";
  std::string accuracy_file;
  double proxy_holdout = 0.2;
  bool compare_joint = false;
  EstimatorConfig estimator;
};

std::map<std::size_t, NormalizationStats> fit_stats(const EnergyDataset& ds, const FewShotSplit& split,
                                                    const DeviceId& target, const std::string& stats_from) {
  auto stats = compute_normalization(ds);
  if (stats_from == "fewshot") {
    // Deployment mode: the target's range is only known from its few samples.
    stats.erase(target.index);
    stats.emplace(target.index, compute_normalization(target.name, split.target_train));
  } else if (stats_from != "pool") {
    throw UsageError("--stats-from must be 'pool' or 'fewshot'");
  }
  return stats;
}

void cmd_fit_proxy(const FitOptions& o, const GlobalOptions& g, const std::string& config) {
  RunContext ctx("fit", g);
  const fs::path data(o.data_dir);
  const fs::path acc_path = o.accuracy_file.empty() ? data / "accuracy.csv" : fs::path(o.accuracy_file);
  ctx.input(data / "archs.json");
  ctx.input(acc_path);
  const auto archs = load_arch_table(data / "archs.json");
  std::map<std::string, const ArchEntry*> by_id;
  for (const auto& e : archs) by_id[e.id] = &e;
  std::vector<LabeledSample> samples;
  for (const auto& r : load_accuracy_csv(acc_path)) {
    const auto it = by_id.find(r.arch_id);
    if (it == by_id.end()) throw DataError("accuracy row for unknown arch '" + r.arch_id + "'");
    if (!it->second->arch) throw DataError("mAP proxy needs block-space architectures; '" + r.arch_id + "' is opaque");
    samples.push_back({it->second->encoding, DeviceId{}, r.accuracy});
  }
  if (samples.size() < 2) throw DataError("need at least two accuracy rows");
  if (!(o.proxy_holdout >= 0.0 && o.proxy_holdout < 1.0)) throw UsageError("--proxy-holdout must be in [0, 1)");

  const std::uint64_t split_seed = derive_seed(g.seed, "fit.proxy.split");
  const std::uint64_t train_seed = derive_seed(g.seed, "fit.proxy.train");
  ctx.seed("fit.proxy.split", split_seed);
  ctx.seed("fit.proxy.train", train_seed);
  std::mt19937_64 rng(split_seed);
  std::shuffle(samples.begin(), samples.end(), rng);
  const auto n_test = static_cast<std::size_t>(std::floor(o.proxy_holdout * static_cast<double>(samples.size())));
  const std::vector<LabeledSample> test(samples.begin(), samples.begin() + static_cast<std::ptrdiff_t>(n_test));
  const std::vector<LabeledSample> train_set(samples.begin() + static_cast<std::ptrdiff_t>(n_test), samples.end());

  std::vector<std::size_t> sizes{kArchEncodingDim};
  sizes.insert(sizes.end(), o.estimator.hidden_layers.begin(), o.estimator.hidden_layers.end());
  sizes.push_back(1);
  TrainConfig tc = o.estimator.pretrain;
  tc.rng_seed = train_seed;
  const auto trained = train(Network::initialized(sizes, derive_seed(train_seed, "init")), to_regression_data(train_set), tc);

  nlohmann::json metrics;
  metrics["model"] = "proxy";
  metrics["n_train"] = train_set.size();
  metrics["n_test"] = test.size();
  metrics["train_rmse"] = rmse(trained.network, to_regression_data(train_set));
  if (!test.empty()) metrics["test_rmse"] = rmse(trained.network, to_regression_data(test));
  ctx.write("proxy.json", dump(proxy_to_json(trained.network, {{"accuracy_sha256", sha256_file(acc_path)},
                                                                {"train_seed", train_seed}})));
  ctx.write("metrics.json", dump(metrics));
  ctx.summary() = metrics;
  ctx.finish(config);
}

void cmd_fit(const FitOptions& o, const GlobalOptions& g, const std::string& config) {
  if (o.model == "proxy") {
    cmd_fit_proxy(o, g, config);
    return;
  }
  if (o.model != "two_stage" && o.model != "joint") throw UsageError("--model must be two_stage, joint or proxy");
  if (o.target.empty()) throw UsageError("--target is required for energy models");

  RunContext ctx("fit", g);
  const fs::path data(o.data_dir);
  for (const char* f : {"energy.csv", "archs.json", "registry.json"}) ctx.input(data / f);
  const EnergyDataset ds = load_dataset(data);
  const DeviceId target = ds.registry().id(o.target);
  std::vector<DeviceId> sources;
  for (const auto& s : o.sources) sources.push_back(ds.registry().id(s));

  const std::uint64_t split_seed = derive_seed(g.seed, "fit.split");
  EstimatorConfig cfg = o.estimator;
  cfg.finetune.l2_penalty = cfg.pretrain.l2_penalty;
  cfg.pretrain.rng_seed = derive_seed(g.seed, "fit.pretrain");
  cfg.finetune.rng_seed = derive_seed(g.seed, "fit.finetune");
  ctx.seed("fit.split", split_seed);
  ctx.seed("fit.pretrain", cfg.pretrain.rng_seed);
  ctx.seed("fit.finetune", cfg.finetune.rng_seed);

  const FewShotSplit split = split_fewshot(ds, target, o.n_target, split_seed, sources);
  if (split.source_pool.empty()) throw DataError("no source-device records to pretrain on");
  const auto stats = fit_stats(ds, split, target, o.stats_from);
  const auto source = to_samples(ds, split.source_pool, stats);
  const auto train_samples = to_samples(ds, split.target_train, stats);
  const auto test_samples = to_samples(ds, split.target_test, stats);

  EstimatorBundle bundle;
  bundle.kind = o.model;
  for (const auto& [idx, s] : stats) bundle.normalization.emplace(s.device(), s);
  bundle.provenance = {{"dataset_hash", dataset_hash(ds)}, {"target", target.name},        {"n_target", o.n_target},
                       {"split_seed", split_seed},         {"pretrain_seed", cfg.pretrain.rng_seed},
                       {"stats_from", o.stats_from}};

  nlohmann::json metrics;
  metrics["model"] = o.model;
  metrics["target"] = target.name;
  metrics["n_train"] = train_samples.size();
  metrics["n_test"] = test_samples.size();
  if (o.model == "two_stage" || o.compare_joint) {
    const TwoStageEstimator prior = pretrain_base(source, ds.registry(), cfg);
    const TwoStageEstimator fitted = fit_residual(prior, train_samples, cfg);
    metrics["two_stage"] = {{"test_rmse", estimator_rmse(fitted, test_samples)},
                            {"test_mae", estimator_mae(fitted, test_samples)},
                            {"prior_only_test_rmse", estimator_rmse(prior, test_samples)}};
    if (o.model == "two_stage") bundle.two_stage = fitted;
  }
  if (o.model == "joint" || o.compare_joint) {
    const JointEstimator joint = pretrain_and_finetune_joint(source, train_samples, ds.registry(), cfg);
    metrics["joint"] = {{"test_rmse", estimator_rmse(joint, test_samples)}};
    if (o.model == "joint") bundle.joint = joint;
  }
  ctx.write("estimator.json", dump(bundle_to_json(bundle)));
  ctx.write("metrics.json", dump(metrics));
  ctx.summary() = metrics;
  ctx.finish(config);
}

// ---- search ---------------------------------------------------------------

struct SearchOptions {
  std::string proxy;
  std::string estimator;
  std::string budget = "inf";
  std::string device;
  std::size_t iterations = 4;
  std::uint64_t enum_limit = std::uint64_t{1} << 20;
  std::size_t sample_fallback = 4096;
  std::string init;
  bool skip_check = false;
};

void cmd_search(const SearchOptions& o, const GlobalOptions& g, const std::string& config) {
  RunContext ctx("search", g);
  ctx.input(o.proxy);
  ctx.input(o.estimator);
  const Network proxy = proxy_from_json(read_json_file(o.proxy));
  const EstimatorBundle bundle = bundle_from_json(read_json_file(o.estimator));
  const TwoStageEstimator energy = bundle.energy_model();

  SearchConfig cfg;
  cfg.budget_tau = parse_budget(o.budget);
  cfg.max_iterations = o.iterations;
  cfg.stage_enumeration_limit = o.enum_limit;
  cfg.sample_fallback = o.sample_fallback;
  cfg.rng_seed = derive_seed(g.seed, "search");
  cfg.workers = g.workers;
  cfg.device = energy.registry().id(o.device.empty() ? bundle.provenance.value("target", "") : o.device);
  ctx.seed("search", cfg.rng_seed);
  try {
    check_search_inputs(proxy, energy, cfg);
  } catch (const std::invalid_argument& e) {
    // Wrong encodings are a property of the input files, not of the flags.
    if (cfg.max_iterations == 0) throw;
    throw DataError(e.what());
  }

  DetectorArchitecture init = default_initial_architecture();
  if (!o.init.empty()) {
    ctx.input(o.init);
    init = architecture_from_json(read_json_file(o.init));
  }

  const SearchResult result = search(init, proxy, energy, cfg);
  nlohmann::json arch = architecture_to_json(result.architecture);
  ctx.write("architecture.json", dump(arch));
  ctx.write("trace.jsonl", trace_jsonl(result.history));

  auto& s = ctx.summary();
  s["device"] = cfg.device.name;
  s["budget"] = o.budget;
  s["proxy_map"] = result.proxy_map;
  s["energy"] = result.energy;
  if (bundle.normalization.contains(cfg.device.name)) {
    s["energy_joules"] = bundle.normalization.at(cfg.device.name).denormalize(result.energy);
  }
  s["feasible"] = result.feasible;
  s["iterations_run"] = result.iterations_run;
  s["converged_at"] = result.converged_at ? nlohmann::json(*result.converged_at) : nlohmann::json(nullptr);

  if (!o.skip_check) {
    const OptimalityReport report = local_optimality_check(result.architecture, proxy, energy, cfg);
    ctx.write("optimality.json", dump(optimality_report_to_json(report)));
    s["local_optimality_violations"] = report.violation_count;
  }
  ctx.finish(config);
}

// ---- scale ----------------------------------------------------------------

struct ScaleOptions {
  std::string arch;
  std::vector<std::string> labels;
  bool all = false;
};

void cmd_scale(const ScaleOptions& o, const GlobalOptions& g, const std::string& config) {
  if (!o.all && o.labels.empty()) throw UsageError("give --label or --all");
  std::vector<ScaleLabel> labels;
  if (o.all) {
    labels = {ScaleLabel::Nano, ScaleLabel::Small, ScaleLabel::Medium};
  } else {
    for (const auto& l : o.labels) {
      try {
        labels.push_back(parse_scale_label(l));
      } catch (const DataError& e) {
        throw UsageError(e.what());
      }
    }
  }
  validate_factor_ordering(default_scaling_factor(ScaleLabel::Nano), default_scaling_factor(ScaleLabel::Small),
                           default_scaling_factor(ScaleLabel::Medium));
  RunContext ctx("scale", g);
  ctx.input(o.arch);
  const DetectorArchitecture base = architecture_from_json(read_json_file(o.arch));
  nlohmann::json costs = nlohmann::json::object();
  for (ScaleLabel label : labels) {
    const ScaledDetector scaled = scale_architecture(base, default_scaling_factor(label));
    const std::string name(scale_label_name(label));
    ctx.write("scaled_" + name + ".json", dump(scaled_detector_to_json(scaled)));
    costs[name] = scaled.cost();
  }
  ctx.summary()["costs"] = costs;
  ctx.finish(config);
}

// ---- bench ----------------------------------------------------------------

struct BenchOptions {
  std::string data_dir;
  std::string target;
  std::size_t n_min = 2;
  std::size_t n_max = 20;
  std::size_t n_step = 2;
  std::size_t repetitions = 30;
  std::vector<std::string> sources;
  EstimatorConfig estimator;
};

void cmd_bench(const BenchOptions& o, const GlobalOptions& g, const std::string& config) {
  if (o.n_min == 0 || o.n_step == 0 || o.n_max < o.n_min) throw UsageError("need 1 <= --n-min <= --n-max, --n-step >= 1");
  if (o.repetitions == 0) throw UsageError("--repetitions must be >= 1");
  RunContext ctx("bench", g);
  const fs::path data(o.data_dir);
  for (const char* f : {"energy.csv", "archs.json", "registry.json"}) ctx.input(data / f);
  const EnergyDataset ds = load_dataset(data);

  std::vector<std::size_t> n_values;
  for (std::size_t n = o.n_min; n <= o.n_max; n += o.n_step) n_values.push_back(n);
  BenchmarkConfig cfg;
  cfg.estimator = o.estimator;
  cfg.estimator.finetune.l2_penalty = cfg.estimator.pretrain.l2_penalty;
  cfg.seed = derive_seed(g.seed, "bench");
  cfg.source_devices = o.sources;
  cfg.workers = g.workers;
  ctx.seed("bench", cfg.seed);

  const FewShotReport report = run_fewshot_benchmark(ds, ds.registry().id(o.target), n_values, o.repetitions, cfg);
  ctx.write("fewshot_report.csv", fewshot_report_csv(report));
  nlohmann::json detail = report.metadata;
  auto cells = nlohmann::json::array();
  for (const auto& c : report.cells) {
    cells.push_back({{"n_target", c.n_target}, {"model", c.model}, {"rmse", c.rmses}});
  }
  detail["runs"] = cells;
  ctx.write("fewshot_report.json", dump(detail));
  ctx.summary()["cells"] = report.cells.size();
  ctx.finish(config);
}

// ---- report ---------------------------------------------------------------

struct ReportOptions {
  std::string input;
  std::size_t n_samples = 1000;
  std::size_t bins = 20;
  std::string estimator;
  std::string device;
  std::string proxy;
  std::string incumbent;
};

void cmd_report_pareto(const ReportOptions& o, const GlobalOptions& g, const std::string& config) {
  RunContext ctx("report pareto", g);
  ctx.input(o.input);
  const auto entries = load_pareto_input(o.input);
  if (entries.empty()) throw DataError("no rows in " + o.input);
  const auto rows = pareto_report(entries);
  ctx.write("pareto.csv", pareto_csv(rows));
  ctx.summary()["entries"] = rows.size();
  ctx.summary()["non_dominated"] = std::count_if(rows.begin(), rows.end(), [](const auto& r) { return !r.dominated; });
  ctx.finish(config);
}

void cmd_report_space(const ReportOptions& o, const GlobalOptions& g, const std::string& config) {
  if (o.n_samples == 0) throw UsageError("--n-samples must be >= 1");
  RunContext ctx("report space", g);
  ArchitectureFn energy_fn = [](const DetectorArchitecture& a) { return architecture_cost(a); };
  std::string energy_source = "analytic_cost";
  std::optional<TwoStageEstimator> est;
  DeviceId device;
  if (!o.estimator.empty()) {
    ctx.input(o.estimator);
    const EstimatorBundle bundle = bundle_from_json(read_json_file(o.estimator));
    est = bundle.energy_model();
    device = est->registry().id(o.device.empty() ? bundle.provenance.value("target", "") : o.device);
    energy_fn = [&](const DetectorArchitecture& a) { return est->predict(a, device); };
    energy_source = "estimator:" + device.name;
  }
  ArchitectureFn proxy_fn = synthetic_accuracy;
  std::string proxy_source = "synthetic_accuracy";
  std::optional<Network> proxy;
  if (!o.proxy.empty()) {
    ctx.input(o.proxy);
    proxy = proxy_from_json(read_json_file(o.proxy));
    if (proxy->input_dim() != kArchEncodingDim) throw DataError("proxy does not consume block encodings");
    proxy_fn = [&](const DetectorArchitecture& a) { return proxy_score(*proxy, a); };
    proxy_source = "proxy";
  }
  DetectorArchitecture incumbent = default_initial_architecture();
  if (!o.incumbent.empty()) {
    ctx.input(o.incumbent);
    incumbent = architecture_from_json(read_json_file(o.incumbent));
  }
  const std::uint64_t seed = derive_seed(g.seed, "report.space");
  ctx.seed("report.space", seed);
  const SpaceReport report = characterize_space(o.n_samples, seed, energy_fn, proxy_fn,
                                                energy_fn(max_cost_architecture()), incumbent, o.bins);
  nlohmann::json j = space_report_to_json(report);
  j["energy_source"] = energy_source;
  j["proxy_source"] = proxy_source;
  j["baseline"] = architecture_to_json(max_cost_architecture());
  ctx.write("space_report.json", dump(j));
  ctx.summary()["mean_energy_reduction"] = report.mean_energy_reduction;
  ctx.finish(config);
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Energy-aware detector architecture search toolkit", "eanas"};
  app.set_version_flag("--version", kToolVersion);
  app.fallthrough();
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML-style configuration file; command-line flags take precedence");

  GlobalOptions global;
  app.add_option("--seed", global.seed, "Root seed; every random stream derives from it")->capture_default_str();
  app.add_option("--workers", global.workers, "Worker threads (results do not depend on this)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app.add_option("--out-dir", global.out_dir, "Output directory")->capture_default_str();
  app.add_flag("--no-create-out-dir", global.no_create_out_dir, "Fail instead of creating a missing --out-dir");

  SynthOptions synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic energy/accuracy dataset");
  synth_cmd->add_option("--family", synth.family, "constant_offset | device_scale | nonlinear_mix")->capture_default_str();
  synth_cmd->add_option("--devices", synth.devices)->delimiter(',')->capture_default_str();
  synth_cmd->add_option("--offsets", synth.offsets)->delimiter(',')->capture_default_str();
  synth_cmd->add_option("--scales", synth.scales)->delimiter(',')->capture_default_str();
  synth_cmd->add_option("--betas", synth.betas)->delimiter(',')->capture_default_str();
  synth_cmd->add_option("--n-archs", synth.n_archs)->capture_default_str();
  synth_cmd->add_option("--noise-sd", synth.noise_sd)->capture_default_str();
  synth_cmd->add_option("--accuracy-noise-sd", synth.accuracy_noise_sd)->capture_default_str();

  FitOptions fit;
  auto* fit_cmd = app.add_subcommand("fit", "Fit an energy estimator or an mAP proxy");
  fit_cmd->add_option("--data", fit.data_dir, "Dataset directory")->required();
  fit_cmd->add_option("--target", fit.target, "Target device");
  fit_cmd->add_option("--n-target", fit.n_target, "Target-device samples used for adaptation")->capture_default_str();
  fit_cmd->add_option("--model", fit.model, "two_stage | joint | proxy")->capture_default_str();
  fit_cmd->add_option("--sources", fit.sources, "Source devices (default: all others)")->delimiter(',');
  fit_cmd->add_option("--stats-from", fit.stats_from, "pool | fewshot")->capture_default_str();
  fit_cmd->add_option("--accuracy", fit.accuracy_file, "Accuracy CSV for --model proxy");
  fit_cmd->add_option("--proxy-holdout", fit.proxy_holdout)->capture_default_str();
  fit_cmd->add_flag("--compare-joint", fit.compare_joint, "Also report the joint baseline's metrics");
  add_estimator_options(fit_cmd, fit.estimator);

  SearchOptions srch;
  auto* search_cmd = app.add_subcommand("search", "Budget-constrained iterative architecture search");
  search_cmd->add_option("--proxy", srch.proxy, "mAP proxy file")->required();
  search_cmd->add_option("--estimator", srch.estimator, "Estimator bundle")->required();
  search_cmd->add_option("--budget", srch.budget, "Normalized energy budget or 'inf'")->capture_default_str();
  search_cmd->add_option("--device", srch.device, "Target device (default: bundle target)");
  search_cmd->add_option("--iterations", srch.iterations)->check(CLI::PositiveNumber)->capture_default_str();
  search_cmd->add_option("--enum-limit", srch.enum_limit)->capture_default_str();
  search_cmd->add_option("--sample-fallback", srch.sample_fallback)->capture_default_str();
  search_cmd->add_option("--init", srch.init, "Initial architecture JSON");
  search_cmd->add_flag("--skip-check", srch.skip_check, "Skip the local-optimality report");

  ScaleOptions scale;
  auto* scale_cmd = app.add_subcommand("scale", "Derive nano/small/medium variants of an architecture");
  scale_cmd->add_option("--arch", scale.arch, "Architecture JSON")->required();
  scale_cmd->add_option("--label", scale.labels, "nano | small | medium")->delimiter(',');
  scale_cmd->add_flag("--all", scale.all, "Emit all three variants");

  BenchOptions bench;
  auto* bench_cmd = app.add_subcommand("bench", "Few-shot RMSE benchmark: two-stage vs joint");
  bench_cmd->add_option("--data", bench.data_dir, "Dataset directory")->required();
  bench_cmd->add_option("--target", bench.target, "Target device")->required();
  bench_cmd->add_option("--n-min", bench.n_min)->capture_default_str();
  bench_cmd->add_option("--n-max", bench.n_max)->capture_default_str();
  bench_cmd->add_option("--n-step", bench.n_step)->capture_default_str();
  bench_cmd->add_option("--repetitions", bench.repetitions)->capture_default_str();
  bench_cmd->add_option("--sources", bench.sources, "Source devices (default: all others)")->delimiter(',');
  add_estimator_options(bench_cmd, bench.estimator);

  ReportOptions report;
  auto* report_cmd = app.add_subcommand("report", "Pareto and search-space reports");
  report_cmd->require_subcommand(1);
  auto* pareto_cmd = report_cmd->add_subcommand("pareto", "Mark Pareto-dominated (accuracy, energy) points");
  pareto_cmd->add_option("--input", report.input, "CSV with header label,accuracy,energy")->required();
  auto* space_cmd = report_cmd->add_subcommand("space", "Energy/accuracy characterization of sampled architectures");
  space_cmd->add_option("--n-samples", report.n_samples)->capture_default_str();
  space_cmd->add_option("--bins", report.bins)->check(CLI::PositiveNumber)->capture_default_str();
  space_cmd->add_option("--estimator", report.estimator, "Estimator bundle (default: analytic cost)");
  space_cmd->add_option("--device", report.device);
  space_cmd->add_option("--proxy", report.proxy, "mAP proxy (default: synthetic accuracy oracle)");
  space_cmd->add_option("--incumbent", report.incumbent, "Incumbent architecture for the iterative pool");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    std::string prefix;
    for (CLI::App* sub = &app; !sub->get_subcommands().empty();) {
      sub = sub->get_subcommands().front();
      prefix += sub->get_name() + ".";
    }
    const std::string config = resolved_config(app, prefix);
    if (*synth_cmd) {
      cmd_synth(synth, global, config);
    } else if (*fit_cmd) {
      cmd_fit(fit, global, config);
    } else if (*search_cmd) {
      cmd_search(srch, global, config);
    } else if (*scale_cmd) {
      cmd_scale(scale, global, config);
    } else if (*bench_cmd) {
      cmd_bench(bench, global, config);
    } else if (*pareto_cmd) {
      cmd_report_pareto(report, global, config);
    } else if (*space_cmd) {
      cmd_report_space(report, global, config);
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::invalid_argument& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  out << "ok\n";
  return kExitOk;
}

}  // namespace eanas
