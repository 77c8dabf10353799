#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>

#include "eanas/energy_estimator.hpp"

namespace eanas::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("eanas_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Estimator settings small enough for unit tests.
inline EstimatorConfig quick_estimator_config() {
  EstimatorConfig cfg;
  cfg.hidden_layers = {64};
  cfg.pretrain = {0.02, 40, 32, 1, 0.0};
  cfg.finetune = {0.01, 200, 1u << 20, 2, 0.0};
  return cfg;
}

inline SyntheticOracleConfig constant_offset_config(double noise_sd = 0.01, std::uint64_t seed = 11) {
  SyntheticOracleConfig cfg;
  cfg.family = OracleFamily::ConstantOffset;
  cfg.devices = {{"cpu", 0.0, 1.0, 0.0}, {"gpu", 0.3, 1.0, 0.0}, {"npu", 0.7, 1.0, 0.0}};
  cfg.noise_sd = noise_sd;
  cfg.rng_seed = seed;
  return cfg;
}

}  // namespace eanas::testing
