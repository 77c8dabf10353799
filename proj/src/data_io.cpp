#include "eanas/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "eanas/errors.hpp"
#include "eanas/util.hpp"

namespace eanas {

EnergyDataset::EnergyDataset(DeviceRegistry registry, std::vector<ArchEntry> archs, std::vector<EnergyRecord> records,
                             bool normalized, std::optional<std::size_t> total_candidates)
    : registry_(std::move(registry)),
      archs_(std::move(archs)),
      records_(std::move(records)),
      normalized_(normalized),
      total_candidates_(total_candidates) {
  for (std::size_t i = 0; i < archs_.size(); ++i) {
    const ArchEntry& e = archs_[i];
    if (e.id.empty() || e.id.find_first_of(",\r\n\"") != std::string::npos) {
      throw DataError("invalid arch id '" + e.id + "'");
    }
    if (!arch_index_.emplace(e.id, i).second) throw DataError("duplicate arch id '" + e.id + "'");
    if (e.encoding.size() == 0 || e.encoding.size() != archs_.front().encoding.size()) {
      throw DataError("arch '" + e.id + "' has an inconsistent encoding length");
    }
  }
  std::set<std::pair<std::string, std::size_t>> seen;
  for (const EnergyRecord& r : records_) {
    if (!arch_index_.contains(r.arch_id)) throw DataError("record references unknown arch '" + r.arch_id + "'");
    if (r.device.index >= registry_.size() || registry_.at(r.device.index).name != r.device.name) {
      throw DataError("record references unregistered device '" + r.device.name + "'");
    }
    if (!std::isfinite(r.energy)) throw DataError("non-finite energy for arch '" + r.arch_id + "'");
    if (!seen.emplace(r.arch_id, r.device.index).second) {
      throw DataError("duplicate record for (" + r.arch_id + ", " + r.device.name + ")");
    }
  }
}

const ArchEntry& EnergyDataset::arch(const std::string& id) const {
  const auto it = arch_index_.find(id);
  if (it == arch_index_.end()) throw DataError("unknown arch '" + id + "'");
  return archs_[it->second];
}

std::size_t EnergyDataset::encoding_dim() const { return archs_.empty() ? 0 : archs_.front().encoding.size(); }

std::size_t EnergyDataset::count_for(const DeviceId& device) const {
  return static_cast<std::size_t>(
      std::count_if(records_.begin(), records_.end(), [&](const EnergyRecord& r) { return r.device == device; }));
}

std::vector<EnergyRecord> EnergyDataset::records_for(const DeviceId& device) const {
  std::vector<EnergyRecord> out;
  std::copy_if(records_.begin(), records_.end(), std::back_inserter(out),
               [&](const EnergyRecord& r) { return r.device == device; });
  return out;
}

bool EnergyDataset::operator==(const EnergyDataset& other) const {
  if (!(registry_ == other.registry_) || records_ != other.records_ || normalized_ != other.normalized_ ||
      total_candidates_ != other.total_candidates_ || archs_.size() != other.archs_.size()) {
    return false;
  }
  for (std::size_t i = 0; i < archs_.size(); ++i) {
    const auto& a = archs_[i];
    const auto& b = other.archs_[i];
    if (a.id != b.id || a.arch != b.arch || a.encoding != b.encoding) return false;
  }
  return true;
}

DeviceRegistry load_registry(const std::filesystem::path& path) {
  try {
    const auto j = nlohmann::json::parse(read_text_file(path));
    if (!j.is_array()) throw DataError("registry.json must be an array of device names");
    return DeviceRegistry(j.get<std::vector<std::string>>());
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed " + path.string() + ": " + e.what());
  }
}

std::string registry_to_text(const DeviceRegistry& registry) {
  return nlohmann::json(registry.names()).dump(2) + "\n";
}

std::vector<ArchEntry> load_arch_table(const std::filesystem::path& path) {
  try {
    const auto j = nlohmann::ordered_json::parse(read_text_file(path));
    if (!j.is_object()) throw DataError("archs.json must map arch ids to architectures or encodings");
    std::vector<ArchEntry> out;
    for (const auto& [id, value] : j.items()) {
      if (value.is_object()) {
        DetectorArchitecture a = architecture_from_json(nlohmann::json::parse(value.dump()));
        EncodingVector enc = encode_architecture(a);
        out.push_back({id, std::move(a), std::move(enc)});
      } else if (value.is_array()) {
        EncodingVector enc{value.get<std::vector<double>>()};
        out.push_back({id, std::nullopt, std::move(enc)});
      } else {
        throw DataError("archs.json entry '" + id + "' must be an object or an array");
      }
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed " + path.string() + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::string arch_table_to_text(const std::vector<ArchEntry>& archs) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const ArchEntry& e : archs) {
    if (e.arch) {
      j[e.id] = nlohmann::ordered_json::parse(architecture_to_json(*e.arch).dump());
    } else {
      j[e.id] = e.encoding.values;
    }
  }
  return j.dump(2) + "\n";
}

namespace {

std::size_t block_space_size() {
  return static_cast<std::size_t>(stage_space_size(StageKind::Backbone) * stage_space_size(StageKind::Fpn) *
                                  stage_space_size(StageKind::Pan));
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

// Yields (1-based line number, line) for nonempty lines, stripping a trailing CR.
std::vector<std::pair<std::size_t, std::string>> csv_lines(const std::string& text) {
  std::vector<std::pair<std::size_t, std::string>> out;
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    out.emplace_back(number, line);
  }
  return out;
}

}  // namespace

EnergyDataset load_energy_csv(const std::filesystem::path& csv_path, std::vector<ArchEntry> archs,
                              const DeviceRegistry& registry) {
  const auto lines = csv_lines(read_text_file(csv_path));
  if (lines.empty() || lines.front().second != "arch_id,device,energy_j") {
    throw DataError(csv_path.string() + ": header must be 'arch_id,device,energy_j'");
  }
  std::set<std::string> known_archs;
  for (const ArchEntry& e : archs) known_archs.insert(e.id);
  std::set<std::pair<std::string, std::string>> seen;
  std::vector<EnergyRecord> records;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto& [number, line] = lines[i];
    const std::string where = csv_path.string() + ":" + std::to_string(number) + ": ";
    const auto fields = split_csv_line(line);
    if (fields.size() != 3) throw DataError(where + "expected 3 fields, got " + std::to_string(fields.size()));
    if (!known_archs.contains(fields[0])) throw DataError(where + "unknown arch_id '" + fields[0] + "'");
    if (!registry.contains(fields[1])) throw DataError(where + "unknown device '" + fields[1] + "'");
    double energy = 0.0;
    try {
      energy = parse_double(fields[2], "energy_j");
    } catch (const DataError& e) {
      throw DataError(where + e.what());
    }
    if (!std::isfinite(energy)) throw DataError(where + "energy must be finite");
    if (!seen.emplace(fields[0], fields[1]).second) {
      throw DataError(where + "duplicate record for (" + fields[0] + ", " + fields[1] + ")");
    }
    records.push_back({fields[0], registry.id(fields[1]), energy});
  }
  // N_0 is only known when every entry lives in the block space.
  const bool block_space = std::all_of(archs.begin(), archs.end(), [](const ArchEntry& e) { return e.arch.has_value(); });
  const std::optional<std::size_t> n0 =
      block_space && !archs.empty() ? std::optional<std::size_t>(block_space_size()) : std::nullopt;
  return EnergyDataset(registry, std::move(archs), std::move(records), false, n0);
}

std::string energy_csv_text(const EnergyDataset& ds) {
  std::string out = "arch_id,device,energy_j\n";
  for (const EnergyRecord& r : ds.records()) {
    out += r.arch_id + "," + r.device.name + "," + format_double(r.energy) + "\n";
  }
  return out;
}

EnergyDataset load_dataset(const std::filesystem::path& dir) {
  const DeviceRegistry registry = load_registry(dir / "registry.json");
  auto archs = load_arch_table(dir / "archs.json");
  return load_energy_csv(dir / "energy.csv", std::move(archs), registry);
}

std::vector<std::filesystem::path> save_dataset(const EnergyDataset& ds, const std::filesystem::path& dir) {
  const std::vector<std::filesystem::path> paths{dir / "energy.csv", dir / "archs.json", dir / "registry.json"};
  write_text_file(paths[0], energy_csv_text(ds));
  write_text_file(paths[1], arch_table_to_text(ds.archs()));
  write_text_file(paths[2], registry_to_text(ds.registry()));
  return paths;
}

std::string dataset_hash(const EnergyDataset& ds) {
  return sha256_hex(registry_to_text(ds.registry()) + arch_table_to_text(ds.archs()) + energy_csv_text(ds));
}

NormalizationStats compute_normalization(const std::string& device, const std::vector<EnergyRecord>& records) {
  if (records.empty()) throw DataError("no records to normalize for device '" + device + "'");
  const auto [lo, hi] = std::minmax_element(records.begin(), records.end(),
                                            [](const auto& a, const auto& b) { return a.energy < b.energy; });
  return NormalizationStats(device, lo->energy, hi->energy);
}

std::map<std::size_t, NormalizationStats> compute_normalization(const EnergyDataset& ds) {
  std::map<std::size_t, NormalizationStats> out;
  for (std::size_t i = 0; i < ds.registry().size(); ++i) {
    const DeviceId dev = ds.registry().at(i);
    const auto records = ds.records_for(dev);
    if (!records.empty()) out.emplace(i, compute_normalization(dev.name, records));
  }
  return out;
}

std::vector<LabeledSample> to_samples(const EnergyDataset& ds, const std::vector<EnergyRecord>& records,
                                      const std::map<std::size_t, NormalizationStats>& stats) {
  std::vector<LabeledSample> out;
  out.reserve(records.size());
  for (const EnergyRecord& r : records) {
    const auto it = stats.find(r.device.index);
    if (it == stats.end()) throw DataError("no normalization stats for device '" + r.device.name + "'");
    out.push_back({ds.arch(r.arch_id).encoding, r.device, it->second.normalize(r.energy)});
  }
  return out;
}

std::string_view oracle_family_name(OracleFamily family) {
  switch (family) {
    case OracleFamily::ConstantOffset:
      return "constant_offset";
    case OracleFamily::DeviceScale:
      return "device_scale";
    case OracleFamily::NonlinearMix:
      return "nonlinear_mix";
  }
  throw InvariantError("unknown oracle family");
}

OracleFamily parse_oracle_family(std::string_view name) {
  for (auto f : {OracleFamily::ConstantOffset, OracleFamily::DeviceScale, OracleFamily::NonlinearMix}) {
    if (oracle_family_name(f) == name) return f;
  }
  throw DataError("unknown oracle family '" + std::string(name) +
                  "' (expected constant_offset, device_scale or nonlinear_mix)");
}

double normalized_architecture_cost(const DetectorArchitecture& a) {
  static const double lo = architecture_cost(min_cost_architecture());
  static const double hi = architecture_cost(max_cost_architecture());
  return (architecture_cost(a) - lo) / (hi - lo);
}

double oracle_energy(const SyntheticOracleConfig& cfg, const DetectorArchitecture& a, std::size_t device_index) {
  const DeviceOracleParams& p = cfg.devices.at(device_index);
  const double g = normalized_architecture_cost(a);
  switch (cfg.family) {
    case OracleFamily::ConstantOffset:
      return g + p.offset;
    case OracleFamily::DeviceScale:
      return p.scale * g;
    case OracleFamily::NonlinearMix:
      return g + p.offset + p.beta * g * g;
  }
  throw InvariantError("unknown oracle family");
}

std::vector<std::string> make_arch_ids(std::size_t n) {
  const std::size_t width = std::max<std::size_t>(4, std::to_string(n == 0 ? 0 : n - 1).size());
  std::vector<std::string> ids;
  ids.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::string digits = std::to_string(i);
    ids.push_back("a" + std::string(width - digits.size(), '0') + digits);
  }
  return ids;
}

EnergyDataset generate_synthetic(const SyntheticOracleConfig& cfg, const std::vector<DetectorArchitecture>& archs) {
  if (archs.empty() || cfg.devices.empty()) throw std::invalid_argument("generate_synthetic: archs and devices needed");
  if (!(cfg.noise_sd >= 0.0)) throw DataError("noise_sd must be >= 0");
  std::vector<std::string> names;
  for (const auto& d : cfg.devices) names.push_back(d.name);
  DeviceRegistry registry(names);

  const auto ids = make_arch_ids(archs.size());
  std::vector<ArchEntry> entries;
  entries.reserve(archs.size());
  for (std::size_t i = 0; i < archs.size(); ++i) entries.push_back({ids[i], archs[i], encode_architecture(archs[i])});

  std::mt19937_64 rng(cfg.rng_seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<EnergyRecord> records;
  records.reserve(archs.size() * cfg.devices.size());
  for (std::size_t d = 0; d < cfg.devices.size(); ++d) {
    for (std::size_t i = 0; i < archs.size(); ++i) {
      const double eps = noise(rng) * cfg.noise_sd;
      records.push_back({ids[i], registry.at(d), oracle_energy(cfg, archs[i], d) + eps});
    }
  }
  return EnergyDataset(std::move(registry), std::move(entries), std::move(records), false, block_space_size());
}

nlohmann::json oracle_config_to_json(const SyntheticOracleConfig& cfg) {
  nlohmann::json devices = nlohmann::json::array();
  for (const auto& d : cfg.devices) {
    devices.push_back({{"name", d.name}, {"offset", d.offset}, {"scale", d.scale}, {"beta", d.beta}});
  }
  return {{"family", std::string(oracle_family_name(cfg.family))},
          {"devices", devices},
          {"noise_sd", cfg.noise_sd},
          {"rng_seed", cfg.rng_seed},
          {"cost_min", architecture_cost(min_cost_architecture())},
          {"cost_max", architecture_cost(max_cost_architecture())}};
}

double synthetic_accuracy(const DetectorArchitecture& a) {
  // Per-block capacity in [0, 1] on a log scale of the unit-channel cost.
  static const double log_max = std::log(analytic_block_cost(BlockChoice::make(0.25, 5, Attention::Full), 1));
  const ReferenceTable table;
  const double channel_total = std::accumulate(table.channels.begin(), table.channels.end(), 0.0);
  const auto blocks = a.blocks();
  double capacity = 0.0;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const double u = std::log(analytic_block_cost(blocks[i], 1)) / log_max;
    capacity += table.channels[i] / channel_total * u;
  }
  return 0.25 + 0.6 * (1.0 - std::exp(-2.5 * capacity));
}

std::vector<AccuracyRecord> load_accuracy_csv(const std::filesystem::path& path) {
  const auto lines = csv_lines(read_text_file(path));
  if (lines.empty() || lines.front().second != "arch_id,accuracy") {
    throw DataError(path.string() + ": header must be 'arch_id,accuracy'");
  }
  std::vector<AccuracyRecord> out;
  std::set<std::string> seen;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto& [number, line] = lines[i];
    const std::string where = path.string() + ":" + std::to_string(number) + ": ";
    const auto fields = split_csv_line(line);
    if (fields.size() != 2) throw DataError(where + "expected 2 fields");
    if (!seen.insert(fields[0]).second) throw DataError(where + "duplicate arch_id '" + fields[0] + "'");
    try {
      out.push_back({fields[0], parse_double(fields[1], "accuracy")});
    } catch (const DataError& e) {
      throw DataError(where + e.what());
    }
  }
  return out;
}

std::string accuracy_csv_text(const std::vector<AccuracyRecord>& records) {
  std::string out = "arch_id,accuracy\n";
  for (const auto& r : records) out += r.arch_id + "," + format_double(r.accuracy) + "\n";
  return out;
}

FewShotSplit split_fewshot(const EnergyDataset& ds, const DeviceId& target, std::size_t n_target, std::uint64_t seed,
                           const std::vector<DeviceId>& source_devices) {
  if (n_target == 0) throw DataError("n_target must be at least 1");
  const DeviceId checked = ds.registry().id(target.name);
  const auto target_records = ds.records_for(checked);
  if (target_records.size() <= n_target) {
    throw DataError("device '" + target.name + "' has " + std::to_string(target_records.size()) +
                    " records; need more than n_target = " + std::to_string(n_target) + " to keep a test set");
  }
  for (const DeviceId& s : source_devices) {
    if (s.name == target.name) throw DataError("target device cannot also be a source device");
    ds.registry().id(s.name);
  }

  std::vector<std::size_t> order(target_records.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<bool> in_train(target_records.size(), false);
  for (std::size_t i = 0; i < n_target; ++i) in_train[order[i]] = true;

  FewShotSplit split;
  split.n_target = n_target;
  split.rng_seed = seed;
  for (std::size_t i = 0; i < target_records.size(); ++i) {
    (in_train[i] ? split.target_train : split.target_test).push_back(target_records[i]);
  }
  for (const EnergyRecord& r : ds.records()) {
    if (r.device == checked) continue;
    const bool wanted = source_devices.empty() ||
                        std::any_of(source_devices.begin(), source_devices.end(),
                                    [&](const DeviceId& s) { return s.name == r.device.name; });
    if (wanted) split.source_pool.push_back(r);
  }
  return split;
}

}  // namespace eanas
