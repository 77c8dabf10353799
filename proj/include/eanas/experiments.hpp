#pragma once

// Reproducible harnesses: few-shot estimator benchmark, search-space
// characterization, and accuracy/energy Pareto reports.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "eanas/arch_space.hpp"
#include "eanas/data_io.hpp"
#include "eanas/energy_estimator.hpp"

namespace eanas {

struct BenchmarkConfig {
  EstimatorConfig estimator;
  std::uint64_t seed = 0;
  std::vector<std::string> source_devices;  // empty: every non-target device
  std::size_t workers = 1;
};

struct FewShotCell {
  std::size_t n_target = 0;
  std::string model;  // "two_stage" or "joint"
  double mean_rmse = 0.0;
  double sd_rmse = 0.0;  // sample standard deviation; 0 for a single run
  std::size_t runs = 0;
  std::vector<double> rmses;  // per repetition, in seed order
};

struct FewShotReport {
  std::vector<FewShotCell> cells;  // sorted by (n_target, model)
  nlohmann::json metadata;

  const FewShotCell& cell(std::size_t n_target, const std::string& model) const;
};

// For each n and repetition: split the target device, adapt both models on
// the n train samples, and score RMSE on the held-out target records.
// Normalization uses every record of each device. Both models are pretrained
// once on the source pool; that pool does not change between repetitions.
FewShotReport run_fewshot_benchmark(const EnergyDataset& ds, const DeviceId& target,
                                    const std::vector<std::size_t>& n_values, std::size_t repetitions,
                                    const BenchmarkConfig& cfg);

// Header `n_target,model,mean_rmse,sd_rmse,runs`.
std::string fewshot_report_csv(const FewShotReport& report);

struct DistributionSummary {
  double mean = 0.0;
  double sd = 0.0;
  double min = 0.0;
  double max = 0.0;
  std::array<double, 5> quantiles{};  // 5th, 25th, 50th, 75th, 95th percentiles
};

DistributionSummary summarize(std::vector<double> values);

struct SpaceReport {
  std::size_t n_samples = 0;
  std::uint64_t seed = 0;
  DistributionSummary energy;
  std::vector<double> histogram_edges;   // bins + 1 edges
  std::vector<std::size_t> histogram_counts;
  double baseline_energy = 0.0;
  double mean_energy_reduction = 0.0;  // 1 - mean / baseline
  DistributionSummary global_proxy;
  DistributionSummary iterative_proxy;
  DetectorArchitecture incumbent;
};

using ArchitectureFn = std::function<double(const DetectorArchitecture&)>;

// Global pool: n uniform architectures (also the energy sample). Iterative
// pool: n architectures that copy the incumbent except one uniformly chosen
// stage, which is drawn uniformly.
SpaceReport characterize_space(std::size_t n_samples, std::uint64_t seed, const ArchitectureFn& energy_fn,
                               const ArchitectureFn& proxy_fn, double baseline_energy,
                               const DetectorArchitecture& incumbent, std::size_t histogram_bins = 20);

nlohmann::json space_report_to_json(const SpaceReport& report);

struct ParetoEntry {
  std::string label;
  double accuracy = 0.0;
  double energy = 0.0;
};

struct ParetoRow {
  ParetoEntry entry;
  bool dominated = false;
};

// Higher accuracy and lower energy are better. Rows come back sorted by
// energy ascending, accuracy descending, then label. Empty input is rejected.
std::vector<ParetoRow> pareto_report(const std::vector<ParetoEntry>& entries);

std::vector<ParetoEntry> load_pareto_input(const std::filesystem::path& path);
// Header `label,accuracy,energy,dominated`.
std::string pareto_csv(const std::vector<ParetoRow>& rows);

}  // namespace eanas
