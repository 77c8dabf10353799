#pragma once

// Two-stage energy model: a device-agnostic prior on the architecture
// encoding plus a per-device residual on (encoding ++ one-hot device).
// All energies here are in per-device normalized units.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "eanas/arch_space.hpp"
#include "eanas/data_io.hpp"
#include "eanas/device.hpp"
#include "eanas/mlp.hpp"

namespace eanas {

struct EstimatorConfig {
  std::vector<std::size_t> hidden_layers{400};
  TrainConfig pretrain{0.02, 150, 32, 0, 0.0};
  // Few-shot adaptation: full batch (batch_size >= N_h), 500 epochs.
  TrainConfig finetune{0.01, 500, 1u << 20, 0, 0.0};
};

// Base and residual outputs are rounded to multiples of 2^-32. For parts
// below 2^20 in magnitude both base + residual and total - residual are then
// exact, so total - residual recovers the device-independent base bit for bit.
// The rounding moves a prediction by at most 1.2e-10 normalized units.
double snap_energy(double value);

struct EnergyEstimate {
  double base = 0.0;
  double residual = 0.0;
  double total = 0.0;  // base + residual
};

class TwoStageEstimator {
 public:
  // Throws std::invalid_argument unless residual input = base input + registry size.
  TwoStageEstimator(Network base, Network residual, DeviceRegistry registry, bool base_frozen = false);

  const Network& base() const { return base_; }
  const Network& residual() const { return residual_; }
  const DeviceRegistry& registry() const { return registry_; }
  bool base_frozen() const { return base_frozen_; }
  std::size_t encoding_dim() const { return base_.input_dim(); }

  double base_part(const EncodingVector& encoding) const;
  double residual_part(const EncodingVector& encoding, const DeviceId& device) const;
  EnergyEstimate estimate(const EncodingVector& encoding, const DeviceId& device) const;
  double predict(const EncodingVector& encoding, const DeviceId& device) const;

  // Block-space overloads; evaluated on the sparse one-hot path so search can
  // reproduce them exactly from cached stage sums.
  double base_part(const DetectorArchitecture& a) const;
  double residual_part(const DetectorArchitecture& a, const DeviceId& device) const;
  EnergyEstimate estimate(const DetectorArchitecture& a, const DeviceId& device) const;
  double predict(const DetectorArchitecture& a, const DeviceId& device) const;

  // Throws DataError for a device this estimator was not built with.
  void check_device(const DeviceId& device) const;

 private:
  Network base_;
  Network residual_;
  DeviceRegistry registry_;
  bool base_frozen_;
};

class JointEstimator {
 public:
  JointEstimator(Network net, DeviceRegistry registry);

  const Network& network() const { return net_; }
  const DeviceRegistry& registry() const { return registry_; }
  std::size_t encoding_dim() const { return net_.input_dim() - registry_.size(); }

  double predict(const EncodingVector& encoding, const DeviceId& device) const;
  double predict(const DetectorArchitecture& a, const DeviceId& device) const;

  // Same predictions as a two-stage model with a zero base; lets search
  // consume a joint model unchanged.
  TwoStageEstimator as_two_stage() const;

 private:
  Network net_;
  DeviceRegistry registry_;
};

// encoding ++ one-hot(device) over `device_count` slots.
EncodingVector device_augmented(const EncodingVector& encoding, std::size_t device_index, std::size_t device_count);

RegressionData to_regression_data(std::span<const LabeledSample> samples);
RegressionData to_regression_data_with_device(std::span<const LabeledSample> samples, std::size_t device_count);

// Trains the prior on pooled source samples (architecture encoding only).
// The residual's output layer starts at exactly zero, so predictions equal
// the prior until fit_residual runs. Throws DataError on empty input.
TwoStageEstimator pretrain_base(std::span<const LabeledSample> source, const DeviceRegistry& registry,
                                const EstimatorConfig& cfg);

// Fits the residual to (target - prior) on one device's samples; the prior is
// copied unchanged. Throws DataError on empty or mixed-device samples.
TwoStageEstimator fit_residual(const TwoStageEstimator& est, std::span<const LabeledSample> target,
                               const EstimatorConfig& cfg);

JointEstimator pretrain_joint(std::span<const LabeledSample> source, const DeviceRegistry& registry,
                              const EstimatorConfig& cfg);
// All parameters free during fine-tuning.
JointEstimator finetune_joint(const JointEstimator& est, std::span<const LabeledSample> target,
                              const EstimatorConfig& cfg);
JointEstimator pretrain_and_finetune_joint(std::span<const LabeledSample> source,
                                           std::span<const LabeledSample> target, const DeviceRegistry& registry,
                                           const EstimatorConfig& cfg);

// Root-mean-square / mean-absolute error over labeled samples (normalized units).
double estimator_rmse(const TwoStageEstimator& est, std::span<const LabeledSample> samples);
double estimator_rmse(const JointEstimator& est, std::span<const LabeledSample> samples);
double estimator_mae(const TwoStageEstimator& est, std::span<const LabeledSample> samples);

// Estimator bundle file: networks, registry, per-device stats and provenance.
struct EstimatorBundle {
  std::string kind;  // "two_stage" or "joint"
  std::optional<TwoStageEstimator> two_stage;
  std::optional<JointEstimator> joint;
  std::map<std::string, NormalizationStats> normalization;
  nlohmann::json provenance = nlohmann::json::object();

  // Two-stage view of either kind.
  TwoStageEstimator energy_model() const;
  // Normalized prediction mapped back to joules with the device's stats.
  double predict_joules(const DetectorArchitecture& a, const DeviceId& device) const;
};

nlohmann::json bundle_to_json(const EstimatorBundle& bundle);
EstimatorBundle bundle_from_json(const nlohmann::json& j);

}  // namespace eanas
