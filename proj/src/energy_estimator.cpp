#include "eanas/energy_estimator.hpp"

#include <algorithm>
#include <cmath>

#include "eanas/errors.hpp"
#include "eanas/util.hpp"

namespace eanas {

namespace {

constexpr int kBundleFormatVersion = 1;

std::vector<std::size_t> layer_sizes(std::size_t input, const std::vector<std::size_t>& hidden) {
  std::vector<std::size_t> sizes{input};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(1);
  return sizes;
}

struct ArchGroups {
  std::array<std::vector<std::uint32_t>, 3> stages;
  std::array<std::uint32_t, 1> device{};
};

ArchGroups arch_groups(const DetectorArchitecture& a) {
  ArchGroups g;
  for (std::size_t s = 0; s < kStageOrder.size(); ++s) g.stages[s] = stage_hot_indices(a.stage(kStageOrder[s]));
  return g;
}

void require_block_encoding(std::size_t encoding_dim) {
  if (encoding_dim != kArchEncodingDim) {
    throw std::invalid_argument("estimator was trained on " + std::to_string(encoding_dim) +
                                "-dim encodings, not the block search space");
  }
}

}  // namespace

double snap_energy(double value) {
  constexpr double kGrid = 0x1p-32;
  return std::nearbyint(value / kGrid) * kGrid;
}

EncodingVector device_augmented(const EncodingVector& encoding, std::size_t device_index, std::size_t device_count) {
  if (device_index >= device_count) throw DataError("device index out of range");
  EncodingVector out = encoding;
  out.values.resize(encoding.size() + device_count, 0.0);
  out.values[encoding.size() + device_index] = 1.0;
  return out;
}

RegressionData to_regression_data(std::span<const LabeledSample> samples) {
  if (samples.empty()) throw DataError("no samples");
  const auto dim = static_cast<Eigen::Index>(samples.front().encoding.size());
  RegressionData data{Eigen::MatrixXd(dim, static_cast<Eigen::Index>(samples.size())),
                      Eigen::VectorXd(static_cast<Eigen::Index>(samples.size()))};
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (static_cast<Eigen::Index>(samples[i].encoding.size()) != dim) throw DataError("mixed encoding lengths");
    const auto col = static_cast<Eigen::Index>(i);
    data.inputs.col(col) = Eigen::Map<const Eigen::VectorXd>(samples[i].encoding.values.data(), dim);
    data.targets(col) = samples[i].target;
  }
  return data;
}

RegressionData to_regression_data_with_device(std::span<const LabeledSample> samples, std::size_t device_count) {
  if (samples.empty()) throw DataError("no samples");
  const auto dim = static_cast<Eigen::Index>(samples.front().encoding.size());
  RegressionData data{Eigen::MatrixXd::Zero(dim + static_cast<Eigen::Index>(device_count),
                                            static_cast<Eigen::Index>(samples.size())),
                      Eigen::VectorXd(static_cast<Eigen::Index>(samples.size()))};
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (static_cast<Eigen::Index>(samples[i].encoding.size()) != dim) throw DataError("mixed encoding lengths");
    if (samples[i].device.index >= device_count) throw DataError("device index out of range");
    const auto col = static_cast<Eigen::Index>(i);
    data.inputs.col(col).head(dim) = Eigen::Map<const Eigen::VectorXd>(samples[i].encoding.values.data(), dim);
    data.inputs(dim + static_cast<Eigen::Index>(samples[i].device.index), col) = 1.0;
    data.targets(col) = samples[i].target;
  }
  return data;
}

TwoStageEstimator::TwoStageEstimator(Network base, Network residual, DeviceRegistry registry, bool base_frozen)
    : base_(std::move(base)), residual_(std::move(residual)), registry_(std::move(registry)), base_frozen_(base_frozen) {
  if (base_.output_dim() != 1 || residual_.output_dim() != 1) {
    throw std::invalid_argument("estimator networks must have one output");
  }
  if (residual_.input_dim() != base_.input_dim() + registry_.size()) {
    throw std::invalid_argument("residual input must be encoding dim + device count");
  }
}

void TwoStageEstimator::check_device(const DeviceId& device) const {
  if (device.index >= registry_.size() || registry_.names()[device.index] != device.name) {
    throw DataError("device '" + device.name + "' is not registered with this estimator");
  }
}

double TwoStageEstimator::base_part(const EncodingVector& encoding) const {
  return snap_energy(base_.forward(encoding.values));
}

double TwoStageEstimator::residual_part(const EncodingVector& encoding, const DeviceId& device) const {
  check_device(device);
  return snap_energy(residual_.forward(device_augmented(encoding, device.index, registry_.size()).values));
}

EnergyEstimate TwoStageEstimator::estimate(const EncodingVector& encoding, const DeviceId& device) const {
  EnergyEstimate e;
  e.base = base_part(encoding);
  e.residual = residual_part(encoding, device);
  e.total = e.base + e.residual;
  return e;
}

double TwoStageEstimator::predict(const EncodingVector& encoding, const DeviceId& device) const {
  return estimate(encoding, device).total;
}

double TwoStageEstimator::base_part(const DetectorArchitecture& a) const {
  require_block_encoding(encoding_dim());
  const ArchGroups g = arch_groups(a);
  const std::array<std::span<const std::uint32_t>, 3> groups{g.stages[0], g.stages[1], g.stages[2]};
  return snap_energy(base_.forward_active(groups));
}

double TwoStageEstimator::residual_part(const DetectorArchitecture& a, const DeviceId& device) const {
  require_block_encoding(encoding_dim());
  check_device(device);
  ArchGroups g = arch_groups(a);
  g.device[0] = static_cast<std::uint32_t>(kArchEncodingDim + device.index);
  const std::array<std::span<const std::uint32_t>, 4> groups{g.stages[0], g.stages[1], g.stages[2], g.device};
  return snap_energy(residual_.forward_active(groups));
}

EnergyEstimate TwoStageEstimator::estimate(const DetectorArchitecture& a, const DeviceId& device) const {
  EnergyEstimate e;
  e.base = base_part(a);
  e.residual = residual_part(a, device);
  e.total = e.base + e.residual;
  return e;
}

double TwoStageEstimator::predict(const DetectorArchitecture& a, const DeviceId& device) const {
  return estimate(a, device).total;
}

JointEstimator::JointEstimator(Network net, DeviceRegistry registry)
    : net_(std::move(net)), registry_(std::move(registry)) {
  if (net_.output_dim() != 1 || net_.input_dim() <= registry_.size()) {
    throw std::invalid_argument("joint network input must exceed the device count");
  }
}

double JointEstimator::predict(const EncodingVector& encoding, const DeviceId& device) const {
  if (device.index >= registry_.size() || registry_.names()[device.index] != device.name) {
    throw DataError("device '" + device.name + "' is not registered with this estimator");
  }
  return net_.forward(device_augmented(encoding, device.index, registry_.size()).values);
}

double JointEstimator::predict(const DetectorArchitecture& a, const DeviceId& device) const {
  return as_two_stage().predict(a, device);
}

TwoStageEstimator JointEstimator::as_two_stage() const {
  return TwoStageEstimator(Network({encoding_dim(), 1}), net_, registry_, true);
}

TwoStageEstimator pretrain_base(std::span<const LabeledSample> source, const DeviceRegistry& registry,
                                const EstimatorConfig& cfg) {
  if (source.empty()) throw DataError("pretrain_base: empty source data");
  const std::size_t dim = source.front().encoding.size();
  const std::uint64_t seed = cfg.pretrain.rng_seed;
  Network base = Network::initialized(layer_sizes(dim, cfg.hidden_layers), derive_seed(seed, "init.base"));
  base = train(std::move(base), to_regression_data(source), cfg.pretrain).network;

  Network residual =
      Network::initialized(layer_sizes(dim + registry.size(), cfg.hidden_layers), derive_seed(seed, "init.residual"));
  const std::size_t last = residual.layer_count() - 1;
  residual.weight(last).setZero();
  residual.bias(last).setZero();
  return TwoStageEstimator(std::move(base), std::move(residual), registry, true);
}

namespace {

void require_single_device(std::span<const LabeledSample> target, const char* who) {
  if (target.empty()) throw DataError(std::string(who) + ": no target samples");
  for (const auto& s : target) {
    if (!(s.device == target.front().device)) {
      throw DataError(std::string(who) + ": target samples span several devices");
    }
  }
}

}  // namespace

TwoStageEstimator fit_residual(const TwoStageEstimator& est, std::span<const LabeledSample> target,
                               const EstimatorConfig& cfg) {
  require_single_device(target, "fit_residual");
  est.check_device(target.front().device);
  std::vector<LabeledSample> residual_targets(target.begin(), target.end());
  for (auto& s : residual_targets) s.target -= est.base_part(s.encoding);
  const RegressionData data = to_regression_data_with_device(residual_targets, est.registry().size());
  Network residual = train(est.residual(), data, cfg.finetune).network;
  return TwoStageEstimator(est.base(), std::move(residual), est.registry(), true);
}

JointEstimator pretrain_joint(std::span<const LabeledSample> source, const DeviceRegistry& registry,
                              const EstimatorConfig& cfg) {
  if (source.empty()) throw DataError("pretrain_joint: empty source data");
  const std::size_t dim = source.front().encoding.size();
  Network net = Network::initialized(layer_sizes(dim + registry.size(), cfg.hidden_layers),
                                     derive_seed(cfg.pretrain.rng_seed, "init.joint"));
  net = train(std::move(net), to_regression_data_with_device(source, registry.size()), cfg.pretrain).network;
  return JointEstimator(std::move(net), registry);
}

JointEstimator finetune_joint(const JointEstimator& est, std::span<const LabeledSample> target,
                              const EstimatorConfig& cfg) {
  require_single_device(target, "finetune_joint");
  const RegressionData data = to_regression_data_with_device(target, est.registry().size());
  return JointEstimator(train(est.network(), data, cfg.finetune).network, est.registry());
}

JointEstimator pretrain_and_finetune_joint(std::span<const LabeledSample> source,
                                           std::span<const LabeledSample> target, const DeviceRegistry& registry,
                                           const EstimatorConfig& cfg) {
  require_single_device(target, "pretrain_and_finetune_joint");
  return finetune_joint(pretrain_joint(source, registry, cfg), target, cfg);
}

double estimator_rmse(const TwoStageEstimator& est, std::span<const LabeledSample> samples) {
  if (samples.empty()) throw DataError("estimator_rmse: no samples");
  const RegressionData base_data = to_regression_data(samples);
  const RegressionData res_data = to_regression_data_with_device(samples, est.registry().size());
  const Eigen::VectorXd pred = est.base().forward_batch(base_data.inputs) + est.residual().forward_batch(res_data.inputs);
  return std::sqrt((pred - base_data.targets).squaredNorm() / static_cast<double>(samples.size()));
}

double estimator_rmse(const JointEstimator& est, std::span<const LabeledSample> samples) {
  if (samples.empty()) throw DataError("estimator_rmse: no samples");
  return rmse(est.network(), to_regression_data_with_device(samples, est.registry().size()));
}

double estimator_mae(const TwoStageEstimator& est, std::span<const LabeledSample> samples) {
  if (samples.empty()) throw DataError("estimator_mae: no samples");
  const RegressionData base_data = to_regression_data(samples);
  const RegressionData res_data = to_regression_data_with_device(samples, est.registry().size());
  const Eigen::VectorXd pred = est.base().forward_batch(base_data.inputs) + est.residual().forward_batch(res_data.inputs);
  return (pred - base_data.targets).cwiseAbs().mean();
}

TwoStageEstimator EstimatorBundle::energy_model() const {
  if (two_stage) return *two_stage;
  if (joint) return joint->as_two_stage();
  throw DataError("estimator bundle holds no model");
}

double EstimatorBundle::predict_joules(const DetectorArchitecture& a, const DeviceId& device) const {
  const auto it = normalization.find(device.name);
  if (it == normalization.end()) throw DataError("bundle has no normalization for '" + device.name + "'");
  return it->second.denormalize(energy_model().predict(a, device));
}

nlohmann::json bundle_to_json(const EstimatorBundle& bundle) {
  nlohmann::json j;
  j["format_version"] = kBundleFormatVersion;
  j["kind"] = bundle.kind;
  nlohmann::json stats = nlohmann::json::object();
  for (const auto& [name, s] : bundle.normalization) stats[name] = {{"min", s.min_energy()}, {"max", s.max_energy()}};
  j["normalization"] = stats;
  j["provenance"] = bundle.provenance;
  if (bundle.kind == "two_stage") {
    if (!bundle.two_stage) throw InvariantError("two_stage bundle without estimator");
    j["registry"] = bundle.two_stage->registry().names();
    j["base"] = network_to_json(bundle.two_stage->base());
    j["residual"] = network_to_json(bundle.two_stage->residual());
  } else if (bundle.kind == "joint") {
    if (!bundle.joint) throw InvariantError("joint bundle without estimator");
    j["registry"] = bundle.joint->registry().names();
    j["net"] = network_to_json(bundle.joint->network());
  } else {
    throw InvariantError("unknown bundle kind '" + bundle.kind + "'");
  }
  return j;
}

EstimatorBundle bundle_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format_version").get<int>() != kBundleFormatVersion) throw DataError("unsupported bundle format_version");
    EstimatorBundle b;
    b.kind = j.at("kind").get<std::string>();
    DeviceRegistry registry(j.at("registry").get<std::vector<std::string>>());
    for (const auto& [name, s] : j.at("normalization").items()) {
      b.normalization.emplace(name, NormalizationStats(name, s.at("min").get<double>(), s.at("max").get<double>()));
    }
    b.provenance = j.value("provenance", nlohmann::json::object());
    if (b.kind == "two_stage") {
      b.two_stage.emplace(network_from_json(j.at("base")), network_from_json(j.at("residual")), registry, true);
    } else if (b.kind == "joint") {
      b.joint.emplace(network_from_json(j.at("net")), registry);
    } else {
      throw DataError("unknown bundle kind '" + b.kind + "'");
    }
    return b;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed estimator bundle: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("inconsistent estimator bundle: ") + e.what());
  }
}

}  // namespace eanas
