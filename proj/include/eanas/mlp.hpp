#pragma once

// Small fully connected regression network: ReLU hidden layers, identity
// output, mean-squared-error training with plain minibatch gradient descent.

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "json.hpp"

namespace eanas {

struct TrainConfig {
  double learning_rate = 0.01;
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  std::uint64_t rng_seed = 0;
  double l2_penalty = 0.0;

  // Throws std::invalid_argument on a non-positive learning rate, zero batch
  // size or negative penalty.
  void validate() const;
};

// Training set with one sample per column of `inputs`.
struct RegressionData {
  Eigen::MatrixXd inputs;   // input_dim x n
  Eigen::VectorXd targets;  // n

  std::size_t size() const { return static_cast<std::size_t>(targets.size()); }
};

struct Gradients {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
};

class Network {
 public:
  // All parameters zero.
  explicit Network(std::vector<std::size_t> layer_sizes);
  // Weights uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero.
  static Network initialized(std::vector<std::size_t> layer_sizes, std::uint64_t seed);

  const std::vector<std::size_t>& layer_sizes() const { return layer_sizes_; }
  std::size_t input_dim() const { return layer_sizes_.front(); }
  std::size_t output_dim() const { return layer_sizes_.back(); }
  std::size_t layer_count() const { return weights_.size(); }
  std::size_t parameter_count() const;

  // Layer i maps layer_sizes[i] -> layer_sizes[i + 1]; weight shape (out, in).
  const Eigen::MatrixXd& weight(std::size_t layer) const { return weights_.at(layer); }
  const Eigen::VectorXd& bias(std::size_t layer) const { return biases_.at(layer); }
  Eigen::MatrixXd& weight(std::size_t layer) { return weights_.at(layer); }
  Eigen::VectorXd& bias(std::size_t layer) { return biases_.at(layer); }

  // Throws std::invalid_argument on a dimension mismatch.
  double forward(std::span<const double> x) const;
  Eigen::VectorXd forward_batch(const Eigen::MatrixXd& inputs) const;

  // Forward pass for a binary input given by its active (== 1.0) indices.
  // Indices are summed group by group: pre = b + sum_g (sum_{i in g} W[:, i]).
  // Callers that cache group sums reproduce this result bit for bit.
  double forward_active(std::span<const std::span<const std::uint32_t>> groups) const;
  // Column sum of the first layer over one group of active indices.
  Eigen::VectorXd first_layer_group_sum(std::span<const std::uint32_t> active) const;
  // Continues the pass from the first layer's pre-activation.
  double forward_from_preactivation(const Eigen::VectorXd& preactivation) const;

  // Flattened parameters: per layer, row-major weights then bias.
  std::vector<double> flat_parameters() const;
  void set_flat_parameters(std::span<const double> params);

  bool operator==(const Network& other) const;

 private:
  std::vector<std::size_t> layer_sizes_;
  std::vector<Eigen::MatrixXd> weights_;
  std::vector<Eigen::VectorXd> biases_;
};

// Mean squared error over `data` plus l2 * sum of squared weights (biases excluded).
double mse_loss(const Network& net, const RegressionData& data, double l2_penalty = 0.0);

// Exact gradient of mse_loss. Throws std::invalid_argument on an empty batch.
Gradients gradient(const Network& net, const RegressionData& batch, double l2_penalty = 0.0);

struct TrainResult {
  Network network;
  std::vector<double> loss_trace;  // full-data loss after each epoch
};

// Minibatch gradient descent; shuffling driven by cfg.rng_seed.
TrainResult train(Network net, const RegressionData& data, const TrainConfig& cfg);

// Throws std::invalid_argument on empty data.
double rmse(const Network& net, const RegressionData& data);

nlohmann::json network_to_json(const Network& net);
Network network_from_json(const nlohmann::json& j);

}  // namespace eanas
