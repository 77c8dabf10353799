#pragma once

// Energy/accuracy tables: file formats, synthetic oracles, and few-shot splits.
//
// On-disk dataset layout (one directory):
//   energy.csv     header `arch_id,device,energy_j`, LF line endings
//   archs.json     {"<arch_id>": <architecture JSON> | [raw encoding values], ...}
//   registry.json  ["device-a", "device-b", ...]

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "eanas/arch_space.hpp"
#include "eanas/device.hpp"

namespace eanas {

// Architecture side-table entry. Block-space architectures carry `arch`;
// opaque entries from foreign search spaces carry only their encoding.
struct ArchEntry {
  std::string id;
  std::optional<DetectorArchitecture> arch;
  EncodingVector encoding;
};

struct EnergyRecord {
  std::string arch_id;
  DeviceId device;
  double energy = 0.0;

  bool operator==(const EnergyRecord&) const = default;
};

class EnergyDataset {
 public:
  // Validates: unique arch ids, one encoding length, records reference known
  // archs and registered devices, finite energies, no duplicate (arch, device).
  EnergyDataset(DeviceRegistry registry, std::vector<ArchEntry> archs, std::vector<EnergyRecord> records,
                bool normalized = false, std::optional<std::size_t> total_candidates = std::nullopt);

  const DeviceRegistry& registry() const { return registry_; }
  const std::vector<ArchEntry>& archs() const { return archs_; }
  const std::vector<EnergyRecord>& records() const { return records_; }
  bool normalized() const { return normalized_; }
  // Size of the full candidate space when known (N_0).
  std::optional<std::size_t> total_candidates() const { return total_candidates_; }

  const ArchEntry& arch(const std::string& id) const;
  std::size_t encoding_dim() const;
  // Number of measurements on one device (N_h).
  std::size_t count_for(const DeviceId& device) const;
  std::vector<EnergyRecord> records_for(const DeviceId& device) const;

  bool operator==(const EnergyDataset& other) const;

 private:
  DeviceRegistry registry_;
  std::vector<ArchEntry> archs_;
  std::map<std::string, std::size_t, std::less<>> arch_index_;
  std::vector<EnergyRecord> records_;
  bool normalized_ = false;
  std::optional<std::size_t> total_candidates_;
};

DeviceRegistry load_registry(const std::filesystem::path& path);
std::string registry_to_text(const DeviceRegistry& registry);

std::vector<ArchEntry> load_arch_table(const std::filesystem::path& path);
std::string arch_table_to_text(const std::vector<ArchEntry>& archs);

// Parses energy.csv against an arch side-table and registry. Errors carry the
// 1-based line number; unknown devices and duplicate (arch, device) pairs are rejected.
EnergyDataset load_energy_csv(const std::filesystem::path& csv_path, std::vector<ArchEntry> archs,
                              const DeviceRegistry& registry);
std::string energy_csv_text(const EnergyDataset& ds);

EnergyDataset load_dataset(const std::filesystem::path& dir);
// Writes energy.csv, archs.json and registry.json; returns the written paths.
std::vector<std::filesystem::path> save_dataset(const EnergyDataset& ds, const std::filesystem::path& dir);

// SHA-256 over the canonical serialized form.
std::string dataset_hash(const EnergyDataset& ds);

// Per-device min/max over all of that device's records.
std::map<std::size_t, NormalizationStats> compute_normalization(const EnergyDataset& ds);
NormalizationStats compute_normalization(const std::string& device, const std::vector<EnergyRecord>& records);

// Encoded, normalized training example.
struct LabeledSample {
  EncodingVector encoding;
  DeviceId device;
  double target = 0.0;
};

// Normalizes each record with its device's stats; a device without stats is an error.
std::vector<LabeledSample> to_samples(const EnergyDataset& ds, const std::vector<EnergyRecord>& records,
                                      const std::map<std::size_t, NormalizationStats>& stats);

enum class OracleFamily { ConstantOffset, DeviceScale, NonlinearMix };
std::string_view oracle_family_name(OracleFamily family);
OracleFamily parse_oracle_family(std::string_view name);

struct DeviceOracleParams {
  std::string name;
  double offset = 0.0;  // c_h
  double scale = 1.0;   // s_h
  double beta = 0.0;    // quadratic weight for NonlinearMix
};

struct SyntheticOracleConfig {
  OracleFamily family = OracleFamily::ConstantOffset;
  std::vector<DeviceOracleParams> devices;
  double noise_sd = 0.01;
  std::uint64_t rng_seed = 0;
};

// Analytic cost rescaled so the cheapest design is 0 and the costliest 1.
double normalized_architecture_cost(const DetectorArchitecture& a);

// Noise-free ground truth for device `device_index` of cfg.devices.
double oracle_energy(const SyntheticOracleConfig& cfg, const DetectorArchitecture& a, std::size_t device_index);

// Ids "a0000", "a0001", ... zero-padded to at least four digits.
std::vector<std::string> make_arch_ids(std::size_t n);

// One record per (device, arch), device-major, with Gaussian noise of sd noise_sd.
EnergyDataset generate_synthetic(const SyntheticOracleConfig& cfg, const std::vector<DetectorArchitecture>& archs);

nlohmann::json oracle_config_to_json(const SyntheticOracleConfig& cfg);

// Desk-scale stand-in for detection accuracy: rises with block capacity,
// concave, in roughly [0.25, 0.85].
double synthetic_accuracy(const DetectorArchitecture& a);

struct AccuracyRecord {
  std::string arch_id;
  double accuracy = 0.0;
};

// accuracy.csv: header `arch_id,accuracy`.
std::vector<AccuracyRecord> load_accuracy_csv(const std::filesystem::path& path);
std::string accuracy_csv_text(const std::vector<AccuracyRecord>& records);

struct FewShotSplit {
  std::size_t n_target = 0;
  std::vector<EnergyRecord> target_train;
  std::vector<EnergyRecord> target_test;
  std::vector<EnergyRecord> source_pool;
  std::uint64_t rng_seed = 0;
};

// Draws n_target target-device records uniformly as the train set; the rest of
// the target's records form the (nonempty) test set. The source pool holds the
// records of `source_devices`, or of every other device when that is empty.
FewShotSplit split_fewshot(const EnergyDataset& ds, const DeviceId& target, std::size_t n_target, std::uint64_t seed,
                           const std::vector<DeviceId>& source_devices = {});

}  // namespace eanas
