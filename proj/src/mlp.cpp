#include "eanas/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

#include "eanas/errors.hpp"

namespace eanas {

namespace {

constexpr int kNetworkFormatVersion = 1;

Eigen::MatrixXd relu(const Eigen::MatrixXd& z) { return z.cwiseMax(0.0); }

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw std::invalid_argument("learning_rate must be > 0");
  }
  if (batch_size == 0) throw std::invalid_argument("batch_size must be >= 1");
  if (!(l2_penalty >= 0.0)) throw std::invalid_argument("l2_penalty must be >= 0");
}

Network::Network(std::vector<std::size_t> layer_sizes) : layer_sizes_(std::move(layer_sizes)) {
  if (layer_sizes_.size() < 2) throw std::invalid_argument("network needs at least input and output sizes");
  for (std::size_t s : layer_sizes_) {
    if (s == 0) throw std::invalid_argument("layer sizes must be positive");
  }
  for (std::size_t i = 0; i + 1 < layer_sizes_.size(); ++i) {
    const auto out = static_cast<Eigen::Index>(layer_sizes_[i + 1]);
    const auto in = static_cast<Eigen::Index>(layer_sizes_[i]);
    weights_.push_back(Eigen::MatrixXd::Zero(out, in));
    biases_.push_back(Eigen::VectorXd::Zero(out));
  }
}

Network Network::initialized(std::vector<std::size_t> layer_sizes, std::uint64_t seed) {
  Network net(std::move(layer_sizes));
  std::mt19937_64 rng(seed);
  for (auto& w : net.weights_) {
    const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    std::uniform_real_distribution<double> dist(-limit, limit);
    // Row-major fill so the draw order matches the checkpoint layout.
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = dist(rng);
    }
  }
  return net;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    n += static_cast<std::size_t>(weights_[i].size() + biases_[i].size());
  }
  return n;
}

double Network::forward(std::span<const double> x) const {
  if (x.size() != input_dim()) {
    throw std::invalid_argument("forward: input length " + std::to_string(x.size()) + " != network input " +
                                std::to_string(input_dim()));
  }
  Eigen::VectorXd a = Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    Eigen::VectorXd z = weights_[l] * a + biases_[l];
    a = (l + 1 < weights_.size()) ? Eigen::VectorXd(z.cwiseMax(0.0)) : z;
  }
  return a(0);
}

Eigen::VectorXd Network::forward_batch(const Eigen::MatrixXd& inputs) const {
  if (static_cast<std::size_t>(inputs.rows()) != input_dim()) {
    throw std::invalid_argument("forward_batch: input rows != network input");
  }
  Eigen::MatrixXd a = inputs;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    Eigen::MatrixXd z = weights_[l] * a;
    z.colwise() += biases_[l];
    a = (l + 1 < weights_.size()) ? relu(z) : z;
  }
  return a.row(0).transpose();
}

Eigen::VectorXd Network::first_layer_group_sum(std::span<const std::uint32_t> active) const {
  const Eigen::MatrixXd& w = weights_.front();
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(w.rows());
  for (std::uint32_t i : active) {
    if (i >= w.cols()) throw std::invalid_argument("forward_active: index out of range");
    sum += w.col(i);
  }
  return sum;
}

double Network::forward_from_preactivation(const Eigen::VectorXd& preactivation) const {
  if (weights_.size() == 1) return preactivation(0);
  Eigen::VectorXd a = preactivation.cwiseMax(0.0);
  for (std::size_t l = 1; l < weights_.size(); ++l) {
    Eigen::VectorXd z = weights_[l] * a + biases_[l];
    a = (l + 1 < weights_.size()) ? Eigen::VectorXd(z.cwiseMax(0.0)) : z;
  }
  return a(0);
}

double Network::forward_active(std::span<const std::span<const std::uint32_t>> groups) const {
  Eigen::VectorXd pre = biases_.front();
  for (auto group : groups) pre += first_layer_group_sum(group);
  return forward_from_preactivation(pre);
}

std::vector<double> Network::flat_parameters() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    for (Eigen::Index r = 0; r < weights_[l].rows(); ++r) {
      for (Eigen::Index c = 0; c < weights_[l].cols(); ++c) out.push_back(weights_[l](r, c));
    }
    for (Eigen::Index r = 0; r < biases_[l].size(); ++r) out.push_back(biases_[l](r));
  }
  return out;
}

void Network::set_flat_parameters(std::span<const double> params) {
  if (params.size() != parameter_count()) throw std::invalid_argument("set_flat_parameters: wrong length");
  std::size_t k = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    for (Eigen::Index r = 0; r < weights_[l].rows(); ++r) {
      for (Eigen::Index c = 0; c < weights_[l].cols(); ++c) weights_[l](r, c) = params[k++];
    }
    for (Eigen::Index r = 0; r < biases_[l].size(); ++r) biases_[l](r) = params[k++];
  }
}

bool Network::operator==(const Network& other) const {
  if (layer_sizes_ != other.layer_sizes_) return false;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    if (weights_[l] != other.weights_[l] || biases_[l] != other.biases_[l]) return false;
  }
  return true;
}

namespace {

void check_data(const Network& net, const RegressionData& data, const char* who) {
  if (data.size() == 0) throw std::invalid_argument(std::string(who) + ": empty data");
  if (static_cast<std::size_t>(data.inputs.rows()) != net.input_dim() || data.inputs.cols() != data.targets.size()) {
    throw std::invalid_argument(std::string(who) + ": data dimensions do not match network");
  }
}

double weight_norm_sq(const Network& net) {
  double s = 0.0;
  for (std::size_t l = 0; l < net.layer_count(); ++l) s += net.weight(l).squaredNorm();
  return s;
}

}  // namespace

double mse_loss(const Network& net, const RegressionData& data, double l2_penalty) {
  check_data(net, data, "mse_loss");
  const Eigen::VectorXd err = net.forward_batch(data.inputs) - data.targets;
  double loss = err.squaredNorm() / static_cast<double>(data.size());
  if (l2_penalty > 0.0) loss += l2_penalty * weight_norm_sq(net);
  return loss;
}

Gradients gradient(const Network& net, const RegressionData& batch, double l2_penalty) {
  check_data(net, batch, "gradient");
  const std::size_t layers = net.layer_count();
  // activations[l] is the input to layer l; preacts[l] its output before activation.
  std::vector<Eigen::MatrixXd> activations;
  std::vector<Eigen::MatrixXd> preacts;
  activations.reserve(layers + 1);
  activations.push_back(batch.inputs);
  for (std::size_t l = 0; l < layers; ++l) {
    Eigen::MatrixXd z = net.weight(l) * activations.back();
    z.colwise() += net.bias(l);
    preacts.push_back(z);
    activations.push_back(l + 1 < layers ? relu(z) : z);
  }

  const double scale = 2.0 / static_cast<double>(batch.size());
  Eigen::MatrixXd delta = scale * (activations.back().row(0) - batch.targets.transpose());

  Gradients g;
  g.weights.resize(layers);
  g.biases.resize(layers);
  for (std::size_t l = layers; l-- > 0;) {
    g.weights[l] = delta * activations[l].transpose();
    if (l2_penalty > 0.0) g.weights[l] += 2.0 * l2_penalty * net.weight(l);
    g.biases[l] = delta.rowwise().sum();
    if (l > 0) {
      Eigen::MatrixXd back = net.weight(l).transpose() * delta;
      delta = back.cwiseProduct((preacts[l - 1].array() > 0.0).cast<double>().matrix());
    }
  }
  return g;
}

TrainResult train(Network net, const RegressionData& data, const TrainConfig& cfg) {
  cfg.validate();
  check_data(net, data, "train");
  std::mt19937_64 rng(cfg.rng_seed);
  std::vector<Eigen::Index> order(data.size());
  std::iota(order.begin(), order.end(), Eigen::Index{0});

  TrainResult result{std::move(net), {}};
  result.loss_trace.reserve(cfg.epochs);
  const bool full_batch = cfg.batch_size >= data.size();
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (full_batch) {
      const Gradients g = gradient(result.network, data, cfg.l2_penalty);
      for (std::size_t l = 0; l < result.network.layer_count(); ++l) {
        result.network.weight(l) -= cfg.learning_rate * g.weights[l];
        result.network.bias(l) -= cfg.learning_rate * g.biases[l];
      }
    } else {
      std::shuffle(order.begin(), order.end(), rng);
      for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
        const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
        const std::vector<Eigen::Index> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                            order.begin() + static_cast<std::ptrdiff_t>(stop));
        RegressionData batch{data.inputs(Eigen::all, idx), data.targets(idx)};
        const Gradients g = gradient(result.network, batch, cfg.l2_penalty);
        for (std::size_t l = 0; l < result.network.layer_count(); ++l) {
          result.network.weight(l) -= cfg.learning_rate * g.weights[l];
          result.network.bias(l) -= cfg.learning_rate * g.biases[l];
        }
      }
    }
    result.loss_trace.push_back(mse_loss(result.network, data, cfg.l2_penalty));
  }
  return result;
}

double rmse(const Network& net, const RegressionData& data) {
  check_data(net, data, "rmse");
  return std::sqrt(mse_loss(net, data, 0.0));
}

nlohmann::json network_to_json(const Network& net) {
  nlohmann::json j;
  j["format_version"] = kNetworkFormatVersion;
  j["layer_sizes"] = net.layer_sizes();
  auto weights = nlohmann::json::array();
  auto biases = nlohmann::json::array();
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    std::vector<double> w;
    w.reserve(static_cast<std::size_t>(net.weight(l).size()));
    for (Eigen::Index r = 0; r < net.weight(l).rows(); ++r) {
      for (Eigen::Index c = 0; c < net.weight(l).cols(); ++c) w.push_back(net.weight(l)(r, c));
    }
    weights.push_back(std::move(w));
    biases.push_back(std::vector<double>(net.bias(l).data(), net.bias(l).data() + net.bias(l).size()));
  }
  j["weights"] = std::move(weights);
  j["biases"] = std::move(biases);
  return j;
}

Network network_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format_version").get<int>() != kNetworkFormatVersion) {
      throw DataError("unsupported network format_version");
    }
    Network net(j.at("layer_sizes").get<std::vector<std::size_t>>());
    const auto& weights = j.at("weights");
    const auto& biases = j.at("biases");
    if (weights.size() != net.layer_count() || biases.size() != net.layer_count()) {
      throw DataError("network checkpoint layer count mismatch");
    }
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
      const auto w = weights[l].get<std::vector<double>>();
      const auto b = biases[l].get<std::vector<double>>();
      if (w.size() != static_cast<std::size_t>(net.weight(l).size()) ||
          b.size() != static_cast<std::size_t>(net.bias(l).size())) {
        throw DataError("network checkpoint shape mismatch in layer " + std::to_string(l));
      }
      std::size_t k = 0;
      for (Eigen::Index r = 0; r < net.weight(l).rows(); ++r) {
        for (Eigen::Index c = 0; c < net.weight(l).cols(); ++c) net.weight(l)(r, c) = w[k++];
      }
      for (Eigen::Index r = 0; r < net.bias(l).size(); ++r) net.bias(l)(r) = b[static_cast<std::size_t>(r)];
    }
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed network checkpoint: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("malformed network checkpoint: ") + e.what());
  }
}

}  // namespace eanas
