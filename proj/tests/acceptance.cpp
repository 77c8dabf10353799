// Acceptance suite: one PASS/FAIL line per criterion. Each criterion must
// also finish inside its runtime limit. Pass criterion numbers as arguments
// to run a subset.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <unistd.h>
#include <vector>

#include "eanas/arch_space.hpp"
#include "eanas/cli.hpp"
#include "eanas/data_io.hpp"
#include "eanas/energy_estimator.hpp"
#include "eanas/experiments.hpp"
#include "eanas/mlp.hpp"
#include "eanas/search.hpp"
#include "eanas/util.hpp"

using namespace eanas;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool ok = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  double limit_seconds;
  std::function<Outcome()> check;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

SyntheticOracleConfig three_device_constant_offset(std::uint64_t seed) {
  SyntheticOracleConfig cfg;
  cfg.family = OracleFamily::ConstantOffset;
  cfg.devices = {{"cpu", 0.0, 1.0, 0.0}, {"gpu", 0.3, 1.0, 0.0}, {"npu", 0.7, 1.0, 0.0}};
  cfg.noise_sd = 0.01;
  cfg.rng_seed = seed;
  return cfg;
}

// ---- 1 -------------------------------------------------------------------

std::vector<double> flat(const Gradients& g) {
  std::vector<double> out;
  for (std::size_t l = 0; l < g.weights.size(); ++l) {
    for (Eigen::Index r = 0; r < g.weights[l].rows(); ++r) {
      for (Eigen::Index c = 0; c < g.weights[l].cols(); ++c) out.push_back(g.weights[l](r, c));
    }
    for (Eigen::Index r = 0; r < g.biases[l].size(); ++r) out.push_back(g.biases[l](r));
  }
  return out;
}

Outcome gradient_oracle() {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> width(1, 12);
  std::uniform_int_distribution<std::size_t> depth(0, 2);
  std::uniform_int_distribution<std::size_t> batch(1, 16);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> bias(-0.5, 0.5);
  double worst = 0.0;
  int failures = 0;
  for (int pair = 0; pair < 100; ++pair) {
    std::vector<std::size_t> sizes{width(rng)};
    for (std::size_t d = depth(rng) + 1; d > 0; --d) sizes.push_back(width(rng));
    sizes.push_back(1);
    Network net = Network::initialized(sizes, 1000 + pair);
    // Nonzero biases keep pre-activations away from the ReLU kink.
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
      for (Eigen::Index i = 0; i < net.bias(l).size(); ++i) net.bias(l)(i) = bias(rng);
    }
    const std::size_t n = batch(rng);
    RegressionData data{Eigen::MatrixXd(sizes.front(), n), Eigen::VectorXd(n)};
    for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(n); ++j) {
      for (Eigen::Index i = 0; i < data.inputs.rows(); ++i) data.inputs(i, j) = nd(rng);
      data.targets(j) = nd(rng);
    }
    const double l2 = pair % 3 == 0 ? 0.01 : 0.0;
    const auto analytic = flat(gradient(net, data, l2));
    const auto params = net.flat_parameters();
    std::vector<double> numeric(params.size());
    Network probe = net;
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto p = params;
      p[i] = params[i] + 1e-5;
      probe.set_flat_parameters(p);
      const double up = mse_loss(probe, data, l2);
      p[i] = params[i] - 1e-5;
      probe.set_flat_parameters(p);
      const double down = mse_loss(probe, data, l2);
      numeric[i] = (up - down) / 2e-5;
    }
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
      diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
      na += analytic[i] * analytic[i];
      nn += numeric[i] * numeric[i];
    }
    const double denom = std::max({std::sqrt(na), std::sqrt(nn), 1e-12});
    const double rel = std::sqrt(diff) / denom;
    worst = std::max(worst, rel);
    if (!(rel < 1e-4)) ++failures;
  }
  return {failures == 0, "100 pairs, max relative error " + fmt(worst, 3) + ", failures " + std::to_string(failures)};
}

// ---- 2 -------------------------------------------------------------------

Outcome cardinality() {
  std::set<std::vector<std::size_t>> seen;
  for (std::uint64_t i = 0; i < stage_space_size(StageKind::Backbone); ++i) {
    const auto stage = StageArchitecture::from_index(StageKind::Backbone, i);
    std::vector<std::size_t> key;
    for (const auto& b : stage.blocks()) key.push_back(b.index());
    seen.insert(key);
  }
  std::size_t round_trip_failures = 0;
  for (const auto& a : sample_uniform(31337, 10000)) {
    if (!(decode_architecture(encode_architecture(a)) == a)) ++round_trip_failures;
  }
  return {seen.size() == 324 && round_trip_failures == 0,
          std::to_string(seen.size()) + " unique backbone configs; " + std::to_string(round_trip_failures) +
              " round-trip failures in 10000"};
}

// ---- 3, 4 ----------------------------------------------------------------

DetectorArchitecture per_slot_argmax(const Network& linear) {
  std::vector<BlockChoice> best(kSearchableBlocks);
  for (std::size_t slot = 0; slot < kSearchableBlocks; ++slot) {
    double best_value = -INFINITY;
    for (const auto& b : enumerate_block_choices()) {
      double v = 0.0;
      for (auto i : block_hot_indices(slot, b)) v += linear.weight(0)(0, i);
      if (v > best_value) {
        best_value = v;
        best[slot] = b;
      }
    }
  }
  return DetectorArchitecture::from_blocks(best);
}

// A small two-stage estimator fitted to synthetic data.
struct SyntheticEstimator {
  EnergyDataset ds;
  TwoStageEstimator est;
  DeviceId target;
};

SyntheticEstimator synthetic_estimator(std::uint64_t seed) {
  EnergyDataset ds = generate_synthetic(three_device_constant_offset(seed), sample_distinct(seed, 300));
  const auto stats = compute_normalization(ds);
  const DeviceId target = ds.registry().id("npu");
  const auto split = split_fewshot(ds, target, 10, seed);
  EstimatorConfig cfg;
  cfg.hidden_layers = {64};
  cfg.pretrain.epochs = 40;
  cfg.pretrain.rng_seed = seed;
  const auto prior = pretrain_base(to_samples(ds, split.source_pool, stats), ds.registry(), cfg);
  auto est = fit_residual(prior, to_samples(ds, split.target_train, stats), cfg);
  return {std::move(ds), std::move(est), target};
}

Outcome search_oracle() {
  const auto synthetic = synthetic_estimator(5);
  int mismatches = 0, violations = 0;
  std::size_t max_iters = 0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    // Separable proxy: a linear map of the encoding is a sum of per-block scores.
    Network proxy({kArchEncodingDim, 1});
    std::mt19937_64 rng(100 + seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (std::size_t i = 0; i < kArchEncodingDim; ++i) proxy.weight(0)(0, static_cast<Eigen::Index>(i)) = u(rng);
    SearchConfig cfg;
    cfg.device = synthetic.target;
    const auto result = search(sample_uniform(seed, 1).front(), proxy, synthetic.est, cfg);
    if (!(result.architecture == per_slot_argmax(proxy))) ++mismatches;
    violations += static_cast<int>(local_optimality_check(result.architecture, proxy, synthetic.est, cfg).violation_count);
    max_iters = std::max(max_iters, result.iterations_run);
  }
  return {mismatches == 0 && violations == 0 && max_iters <= 4,
          "3 proxies: " + std::to_string(mismatches) + " mismatches vs per-slot optimum, " +
              std::to_string(violations) + " local-optimality violations, max iterations " + std::to_string(max_iters)};
}

Outcome budget_compliance() {
  const auto synthetic = synthetic_estimator(9);
  const auto& est = synthetic.est;
  const auto proxy = Network::initialized({kArchEncodingDim, 32, 1}, 77);
  // Starting from the cheapest design makes a feasible architecture exist
  // for every budget at or above its energy.
  const auto init = min_cost_architecture();
  const double lo = est.predict(init, synthetic.target);
  const double hi = est.predict(max_cost_architecture(), synthetic.target);
  // Budgets are normalized energies and must be positive.
  const double floor = std::max(lo, 1e-3);
  if (!(hi > floor)) return {false, "estimator energy range [" + fmt(lo) + ", " + fmt(hi) + "] has no positive budgets"};
  std::mt19937_64 rng(123);
  std::uniform_real_distribution<double> draw(floor, hi);
  int violations = 0;
  double tightest = INFINITY;
  for (int i = 0; i < 20; ++i) {
    SearchConfig cfg;
    cfg.device = synthetic.target;
    cfg.budget_tau = draw(rng);
    const auto result = search(init, proxy, est, cfg);
    // Re-evaluate with the dense forward pass rather than trusting the search.
    const double dense = est.predict(encode_architecture(result.architecture), synthetic.target);
    if (!(dense <= cfg.budget_tau) || !result.feasible) ++violations;
    tightest = std::min(tightest, cfg.budget_tau - dense);
  }
  return {violations == 0, "20 budgets in [" + fmt(floor) + ", " + fmt(hi) + "]: " + std::to_string(violations) +
                               " violations, smallest slack " + fmt(tightest, 3)};
}

// ---- 5 -------------------------------------------------------------------

Outcome freeze_and_decomposition() {
  const auto ds = generate_synthetic(three_device_constant_offset(21), sample_distinct(21, 200));
  const auto stats = compute_normalization(ds);
  const auto target = ds.registry().id("gpu");
  const auto split = split_fewshot(ds, target, 10, 21);
  EstimatorConfig cfg;
  cfg.hidden_layers = {64};
  cfg.pretrain.epochs = 30;
  const auto prior = pretrain_base(to_samples(ds, split.source_pool, stats), ds.registry(), cfg);
  const auto before = prior.base().flat_parameters();
  const auto fitted = fit_residual(prior, to_samples(ds, split.target_train, stats), cfg);
  const bool frozen = fitted.base().flat_parameters() == before && prior.base().flat_parameters() == before;

  // predict(a, h) - residual_part(a, h) must be the same double for every
  // device and must equal the base term.
  int spread = 0, sum_mismatch = 0;
  for (const auto& a : sample_uniform(22, 500)) {
    const double base = fitted.base_part(a);
    for (std::size_t h = 0; h < ds.registry().size(); ++h) {
      const auto id = ds.registry().at(h);
      if (fitted.predict(a, id) - fitted.residual_part(a, id) != base) ++spread;
      const auto e = fitted.estimate(a, id);
      if (e.total != e.base + e.residual || e.base != base) ++sum_mismatch;
    }
  }
  return {frozen && spread == 0 && sum_mismatch == 0,
          std::string("base parameters ") + (frozen ? "bit-identical" : "CHANGED") +
              "; predict - residual_part differs from the base in " + std::to_string(spread) +
              " of 1500 (arch, device) pairs; inconsistent decompositions " + std::to_string(sum_mismatch)};
}

// ---- 6, 7 ----------------------------------------------------------------

Outcome fewshot_ordering() {
  const auto ds = generate_synthetic(three_device_constant_offset(606), sample_distinct(606, 500));
  std::vector<std::size_t> ns;
  for (std::size_t n = 2; n <= 20; n += 2) ns.push_back(n);
  BenchmarkConfig cfg;
  cfg.seed = 6;
  cfg.workers = std::max(1u, std::thread::hardware_concurrency());
  const auto report = run_fewshot_benchmark(ds, ds.registry().id("npu"), ns, 30, cfg);
  int violations = 0;
  std::string table;
  for (std::size_t n : ns) {
    const double ts = report.cell(n, "two_stage").mean_rmse;
    const double jt = report.cell(n, "joint").mean_rmse;
    if (!(ts <= jt)) ++violations;
    table += " n=" + std::to_string(n) + ":" + fmt(ts, 3) + "/" + fmt(jt, 3);
  }
  return {violations == 0, std::to_string(violations) + " of 10 N_h values violate; two_stage/joint mean RMSE" + table};
}

Outcome constant_offset_recovery() {
  const auto ds = generate_synthetic(three_device_constant_offset(707), sample_distinct(707, 500));
  const auto stats = compute_normalization(ds);
  const auto target = ds.registry().id("npu");
  EstimatorConfig cfg;
  double worst = 0.0;
  std::string maes;
  bool ok = true;
  TwoStageEstimator prior = [&] {
    const auto split = split_fewshot(ds, target, 10, 0);
    return pretrain_base(to_samples(ds, split.source_pool, stats), ds.registry(), cfg);
  }();
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto split = split_fewshot(ds, target, 10, seed);
    cfg.finetune.rng_seed = seed;
    const auto fitted = fit_residual(prior, to_samples(ds, split.target_train, stats), cfg);
    const double mae = estimator_mae(fitted, to_samples(ds, split.target_test, stats));
    worst = std::max(worst, mae);
    ok = ok && mae < 0.05;
    maes += " " + fmt(mae, 3);
  }
  return {ok, "N_h = 10, 5 splits, held-out MAE:" + maes + " (max " + fmt(worst, 3) + ")"};
}

// ---- 8, 9 ----------------------------------------------------------------

Outcome space_characterization() {
  const ArchitectureFn cost = [](const DetectorArchitecture& a) { return architecture_cost(a); };
  const double baseline = architecture_cost(max_cost_architecture());
  const auto report = characterize_space(1000, 8, cost, synthetic_accuracy, baseline, default_initial_architecture());
  return {report.energy.mean < baseline, "mean " + fmt(report.energy.mean, 6) + " vs baseline " + fmt(baseline, 6) +
                                             " (reduction " + fmt(100.0 * report.mean_energy_reduction, 3) + "%)"};
}

Outcome scaling_monotonicity() {
  const auto nano = default_scaling_factor(ScaleLabel::Nano);
  const auto small = default_scaling_factor(ScaleLabel::Small);
  const auto medium = default_scaling_factor(ScaleLabel::Medium);
  auto bases = sample_uniform(99, 5000);
  bases.push_back(min_cost_architecture());
  bases.push_back(max_cost_architecture());
  int order_failures = 0, identity_failures = 0;
  const ReferenceTable table;
  for (const auto& a : bases) {
    const double n = scale_architecture(a, nano).cost();
    const double s = scale_architecture(a, small).cost();
    const double m = scale_architecture(a, medium).cost();
    if (!(n < s && s < m)) ++order_failures;
    const auto id = scale_architecture(a, {ScaleLabel::Nano, 1.0, 1.0});
    if (id.derived_channels != table.channels || id.derived_repeats != table.repeats || id.cost() != architecture_cost(a)) {
      ++identity_failures;
    }
  }
  return {order_failures == 0 && identity_failures == 0,
          std::to_string(bases.size()) + " bases: " + std::to_string(order_failures) + " ordering failures, " +
              std::to_string(identity_failures) + " identity failures"};
}

// ---- 10 ------------------------------------------------------------------

int cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  if (code != kExitOk) std::cerr << err.str();
  return code;
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / ("eanas_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  const std::string data = (root / "data").string();
  const std::vector<std::string> small{"--hidden", "32", "--pretrain-epochs", "20", "--finetune-epochs", "100"};
  auto with = [](std::vector<std::string> a, const std::vector<std::string>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
  };
  bool ok = cli({"--seed", "10", "--out-dir", data, "synth", "--n-archs", "200"}) == kExitOk;
  ok = ok && cli(with({"--seed", "10", "--out-dir", (root / "fit").string(), "fit", "--data", data, "--target", "npu"},
                      small)) == kExitOk;
  ok = ok && cli(with({"--seed", "10", "--out-dir", (root / "proxy").string(), "fit", "--data", data, "--model", "proxy"},
                      small)) == kExitOk;
  if (!ok) return {false, "setup commands failed"};

  const std::vector<std::string> bench = with({"--seed", "10", "--workers", "2", "bench", "--data", data, "--target",
                                               "npu", "--repetitions", "3", "--n-max", "10"},
                                              small);
  const std::vector<std::string> search{"--seed", "10", "search", "--proxy", (root / "proxy" / "proxy.json").string(),
                                        "--estimator", (root / "fit" / "estimator.json").string(), "--budget", "0.5"};
  const std::vector<std::string> bench_files{"fewshot_report.csv", "fewshot_report.json", "manifest.json"};
  const std::vector<std::string> search_files{"architecture.json", "trace.jsonl", "optimality.json", "manifest.json"};

  int differing = 0, compared = 0;
  auto twice = [&](const std::vector<std::string>& args, const std::vector<std::string>& files, const fs::path& dir) {
    std::vector<std::string> first;
    if (cli(with({"--out-dir", dir.string()}, args)) != kExitOk) return false;
    for (const auto& f : files) first.push_back(sha256_file(dir / f));
    if (cli(with({"--out-dir", dir.string()}, args)) != kExitOk) return false;
    for (std::size_t i = 0; i < files.size(); ++i) {
      ++compared;
      if (sha256_file(dir / files[i]) != first[i]) ++differing;
    }
    return true;
  };
  ok = twice(bench, bench_files, root / "bench") && twice(search, search_files, root / "search");
  fs::remove_all(root);
  return {ok && differing == 0, std::to_string(compared) + " files compared across reruns, " +
                                    std::to_string(differing) + " differ" + (ok ? "" : "; a command failed")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {1, "gradient oracle", 10, gradient_oracle},
      {2, "search-space cardinality and encoding round trip", 5, cardinality},
      {3, "search oracle equivalence", 60, search_oracle},
      {4, "budget compliance", 60, budget_compliance},
      {5, "two-stage freeze and decomposition", 5, freeze_and_decomposition},
      {6, "few-shot ordering", 600, fewshot_ordering},
      {7, "constant-offset recovery", 60, constant_offset_recovery},
      {8, "space characterization", 10, space_characterization},
      {9, "scaling monotonicity", 1, scaling_monotonicity},
      {10, "determinism", 120, determinism},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.contains(c.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = seconds < c.limit_seconds;
    const bool pass = o.ok && in_time;
    if (!pass) ++failed;
    std::printf("[%s] criterion %d: %s | %s | %.2fs (limit %.0fs%s)\n", pass ? "PASS" : "FAIL", c.id, c.name.c_str(),
                o.detail.c_str(), seconds, c.limit_seconds, in_time ? "" : ", exceeded");
    std::fflush(stdout);
  }
  std::printf("%d criteria failed\n", failed);
  return failed == 0 ? 0 : 1;
}
