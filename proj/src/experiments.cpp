#include "eanas/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <limits>
#include <mutex>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "eanas/errors.hpp"
#include "eanas/util.hpp"

namespace eanas {

namespace {

double mean_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

double sample_sd(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

// Runs fn(i) for i in [0, count) on up to `workers` threads.
template <typename Fn>
void parallel_for(std::size_t count, std::size_t workers, Fn fn) {
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(1, count));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> threads;
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace

const FewShotCell& FewShotReport::cell(std::size_t n_target, const std::string& model) const {
  for (const auto& c : cells) {
    if (c.n_target == n_target && c.model == model) return c;
  }
  throw DataError("no report cell for n=" + std::to_string(n_target) + " model=" + model);
}

FewShotReport run_fewshot_benchmark(const EnergyDataset& ds, const DeviceId& target,
                                    const std::vector<std::size_t>& n_values, std::size_t repetitions,
                                    const BenchmarkConfig& cfg) {
  if (ds.registry().size() < 2) throw DataError("few-shot benchmark needs at least two devices");
  if (n_values.empty() || repetitions == 0) throw std::invalid_argument("need n values and repetitions >= 1");
  const DeviceId tgt = ds.registry().id(target.name);
  std::vector<DeviceId> sources;
  for (const auto& name : cfg.source_devices) sources.push_back(ds.registry().id(name));

  const auto stats = compute_normalization(ds);
  const std::size_t n_max = *std::max_element(n_values.begin(), n_values.end());
  const FewShotSplit probe = split_fewshot(ds, tgt, n_max, cfg.seed, sources);
  if (probe.source_pool.empty()) throw DataError("few-shot benchmark: source pool is empty");
  const auto source_samples = to_samples(ds, probe.source_pool, stats);

  EstimatorConfig est_cfg = cfg.estimator;
  est_cfg.pretrain.rng_seed = derive_seed(cfg.seed, "bench.pretrain");
  const TwoStageEstimator prior = pretrain_base(source_samples, ds.registry(), est_cfg);
  const JointEstimator joint_prior = pretrain_joint(source_samples, ds.registry(), est_cfg);

  struct Job {
    std::size_t n;
    std::size_t rep;
    double two_stage = 0.0;
    double joint = 0.0;
  };
  std::vector<Job> jobs;
  for (std::size_t n : n_values) {
    for (std::size_t r = 0; r < repetitions; ++r) jobs.push_back({n, r});
  }

  parallel_for(jobs.size(), cfg.workers, [&](std::size_t i) {
    Job& job = jobs[i];
    const std::uint64_t split_seed = derive_seed(cfg.seed, "bench.split." + std::to_string(job.n), job.rep);
    FewShotSplit split;
    try {
      split = split_fewshot(ds, tgt, job.n, split_seed, sources);
    } catch (const DataError& e) {
      throw DataError("few-shot split n=" + std::to_string(job.n) + " rep=" + std::to_string(job.rep) + ": " +
                      e.what());
    }
    const auto train = to_samples(ds, split.target_train, stats);
    const auto test = to_samples(ds, split.target_test, stats);
    EstimatorConfig run_cfg = est_cfg;
    run_cfg.finetune.rng_seed = derive_seed(split_seed, "bench.finetune");
    job.two_stage = estimator_rmse(fit_residual(prior, train, run_cfg), test);
    job.joint = estimator_rmse(finetune_joint(joint_prior, train, run_cfg), test);
  });

  FewShotReport report;
  std::vector<std::size_t> sorted_n = n_values;
  std::sort(sorted_n.begin(), sorted_n.end());
  sorted_n.erase(std::unique(sorted_n.begin(), sorted_n.end()), sorted_n.end());
  for (std::size_t n : sorted_n) {
    for (const std::string model : {"joint", "two_stage"}) {
      FewShotCell cell;
      cell.n_target = n;
      cell.model = model;
      for (const Job& job : jobs) {
        if (job.n == n) cell.rmses.push_back(model == "joint" ? job.joint : job.two_stage);
      }
      cell.runs = cell.rmses.size();
      cell.mean_rmse = mean_of(cell.rmses);
      cell.sd_rmse = sample_sd(cell.rmses);
      report.cells.push_back(std::move(cell));
    }
  }

  nlohmann::json meta;
  meta["dataset_hash"] = dataset_hash(ds);
  meta["target"] = tgt.name;
  std::vector<std::string> source_names;
  for (const auto& r : probe.source_pool) {
    if (std::find(source_names.begin(), source_names.end(), r.device.name) == source_names.end()) {
      source_names.push_back(r.device.name);
    }
  }
  meta["sources"] = source_names;
  meta["n_values"] = sorted_n;
  meta["repetitions"] = repetitions;
  meta["seed"] = cfg.seed;
  meta["pretrain_seed"] = est_cfg.pretrain.rng_seed;
  meta["hidden_layers"] = est_cfg.hidden_layers;
  meta["pretrain"] = {{"learning_rate", est_cfg.pretrain.learning_rate},
                      {"epochs", est_cfg.pretrain.epochs},
                      {"batch_size", est_cfg.pretrain.batch_size},
                      {"l2_penalty", est_cfg.pretrain.l2_penalty}};
  meta["finetune"] = {{"learning_rate", est_cfg.finetune.learning_rate},
                      {"epochs", est_cfg.finetune.epochs},
                      {"batch_size", est_cfg.finetune.batch_size},
                      {"l2_penalty", est_cfg.finetune.l2_penalty}};
  meta["normalization"] = "per-device min/max over all records of that device";
  report.metadata = meta;
  return report;
}

std::string fewshot_report_csv(const FewShotReport& report) {
  std::string out = "n_target,model,mean_rmse,sd_rmse,runs\n";
  for (const auto& c : report.cells) {
    out += std::to_string(c.n_target) + "," + c.model + "," + format_double(c.mean_rmse) + "," +
           format_double(c.sd_rmse) + "," + std::to_string(c.runs) + "\n";
  }
  return out;
}

DistributionSummary summarize(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("summarize: no values");
  std::sort(values.begin(), values.end());
  DistributionSummary s;
  s.mean = mean_of(values);
  s.sd = sample_sd(values);
  s.min = values.front();
  s.max = values.back();
  const std::array<double, 5> probs{0.05, 0.25, 0.5, 0.75, 0.95};
  for (std::size_t i = 0; i < probs.size(); ++i) {
    // Linear interpolation between order statistics.
    const double pos = probs[i] * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    s.quantiles[i] = values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
  }
  return s;
}

SpaceReport characterize_space(std::size_t n_samples, std::uint64_t seed, const ArchitectureFn& energy_fn,
                               const ArchitectureFn& proxy_fn, double baseline_energy,
                               const DetectorArchitecture& incumbent, std::size_t histogram_bins) {
  if (n_samples == 0) throw std::invalid_argument("characterize_space: n_samples must be >= 1");
  if (histogram_bins == 0) throw std::invalid_argument("characterize_space: need at least one histogram bin");

  const auto global = sample_uniform(derive_seed(seed, "space.global"), n_samples);
  std::vector<double> energies;
  std::vector<double> global_proxy;
  for (const auto& a : global) {
    energies.push_back(energy_fn(a));
    global_proxy.push_back(proxy_fn(a));
  }

  std::mt19937_64 rng(derive_seed(seed, "space.iterative"));
  std::uniform_int_distribution<std::size_t> pick_stage(0, kStageOrder.size() - 1);
  std::vector<double> iterative_proxy;
  for (std::size_t i = 0; i < n_samples; ++i) {
    const StageKind stage = kStageOrder[pick_stage(rng)];
    std::uniform_int_distribution<std::uint64_t> pick_config(0, stage_space_size(stage) - 1);
    iterative_proxy.push_back(proxy_fn(incumbent.with_stage(StageArchitecture::from_index(stage, pick_config(rng)))));
  }

  SpaceReport r{n_samples, seed, summarize(energies), {}, {}, baseline_energy, 0.0,
                summarize(global_proxy), summarize(iterative_proxy), incumbent};
  r.mean_energy_reduction = 1.0 - r.energy.mean / baseline_energy;

  const double lo = r.energy.min;
  const double width = (r.energy.max - lo) / static_cast<double>(histogram_bins);
  for (std::size_t b = 0; b <= histogram_bins; ++b) r.histogram_edges.push_back(lo + width * static_cast<double>(b));
  r.histogram_edges.back() = r.energy.max;
  r.histogram_counts.assign(histogram_bins, 0);
  for (double e : energies) {
    std::size_t bin = width > 0.0 ? static_cast<std::size_t>((e - lo) / width) : 0;
    r.histogram_counts[std::min(bin, histogram_bins - 1)]++;
  }
  return r;
}

namespace {

nlohmann::json summary_json(const DistributionSummary& s) {
  return {{"mean", s.mean},
          {"sd", s.sd},
          {"min", s.min},
          {"max", s.max},
          {"p05", s.quantiles[0]},
          {"p25", s.quantiles[1]},
          {"p50", s.quantiles[2]},
          {"p75", s.quantiles[3]},
          {"p95", s.quantiles[4]}};
}

}  // namespace

nlohmann::json space_report_to_json(const SpaceReport& r) {
  nlohmann::json j;
  j["n_samples"] = r.n_samples;
  j["seed"] = r.seed;
  j["energy"] = summary_json(r.energy);
  j["histogram"] = {{"edges", r.histogram_edges}, {"counts", r.histogram_counts}};
  j["baseline_energy"] = r.baseline_energy;
  j["mean_energy_reduction"] = r.mean_energy_reduction;
  j["global_proxy"] = summary_json(r.global_proxy);
  j["iterative_proxy"] = summary_json(r.iterative_proxy);
  j["incumbent"] = architecture_to_json(r.incumbent);
  j["iterative_pool_interpretation"] =
      "one stage drawn uniformly per sample, its configuration drawn uniformly, other stages fixed at the incumbent";
  return j;
}

std::vector<ParetoRow> pareto_report(const std::vector<ParetoEntry>& entries) {
  if (entries.empty()) throw std::invalid_argument("pareto_report: no entries");
  std::vector<ParetoRow> rows;
  for (const auto& e : entries) rows.push_back({e, false});
  std::sort(rows.begin(), rows.end(), [](const ParetoRow& a, const ParetoRow& b) {
    if (a.entry.energy != b.entry.energy) return a.entry.energy < b.entry.energy;
    if (a.entry.accuracy != b.entry.accuracy) return a.entry.accuracy > b.entry.accuracy;
    return a.entry.label < b.entry.label;
  });
  // Sweep groups of equal energy. Within a group only the top accuracy survives;
  // across groups, anything not beating the best accuracy at lower energy is dominated.
  double best_lower = -std::numeric_limits<double>::infinity();
  for (std::size_t first = 0; first < rows.size();) {
    std::size_t last = first;
    while (last < rows.size() && rows[last].entry.energy == rows[first].entry.energy) ++last;
    const double group_best = rows[first].entry.accuracy;
    for (std::size_t i = first; i < last; ++i) {
      const double acc = rows[i].entry.accuracy;
      rows[i].dominated = acc < group_best || best_lower >= acc;
    }
    best_lower = std::max(best_lower, group_best);
    first = last;
  }
  return rows;
}

std::vector<ParetoEntry> load_pareto_input(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  std::size_t number = 0;
  std::vector<ParetoEntry> out;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!header_seen) {
      if (line != "label,accuracy,energy") throw DataError(path.string() + ": header must be 'label,accuracy,energy'");
      header_seen = true;
      continue;
    }
    const std::string where = path.string() + ":" + std::to_string(number) + ": ";
    const auto c1 = line.find(',');
    const auto c2 = c1 == std::string::npos ? std::string::npos : line.find(',', c1 + 1);
    if (c2 == std::string::npos || line.find(',', c2 + 1) != std::string::npos) {
      throw DataError(where + "expected 3 fields");
    }
    try {
      out.push_back({line.substr(0, c1), parse_double(line.substr(c1 + 1, c2 - c1 - 1), "accuracy"),
                     parse_double(line.substr(c2 + 1), "energy")});
    } catch (const DataError& e) {
      throw DataError(where + e.what());
    }
  }
  if (!header_seen) throw DataError(path.string() + ": empty file");
  return out;
}

std::string pareto_csv(const std::vector<ParetoRow>& rows) {
  std::string out = "label,accuracy,energy,dominated\n";
  for (const auto& r : rows) {
    out += r.entry.label + "," + format_double(r.entry.accuracy) + "," + format_double(r.entry.energy) + "," +
           (r.dominated ? "true" : "false") + "\n";
  }
  return out;
}

}  // namespace eanas
