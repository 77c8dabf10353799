#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace eanas {

// A registered hardware target; `index` is its one-hot slot.
struct DeviceId {
  std::string name;
  std::size_t index = 0;

  bool operator==(const DeviceId&) const = default;
};

// Ordered, duplicate-free list of device names.
class DeviceRegistry {
 public:
  DeviceRegistry() = default;
  // Throws DataError on duplicate or empty names.
  explicit DeviceRegistry(std::vector<std::string> names);

  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  bool contains(std::string_view name) const;
  // Throws DataError naming the device when it is not registered.
  DeviceId id(std::string_view name) const;
  DeviceId at(std::size_t index) const;

  bool operator==(const DeviceRegistry& other) const { return names_ == other.names_; }

 private:
  std::vector<std::string> names_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

// Per-device min/max energy used to map joules into [0, 1].
class NormalizationStats {
 public:
  // Throws DataError unless max_energy > min_energy.
  NormalizationStats(std::string device, double min_energy, double max_energy);

  const std::string& device() const { return device_; }
  double min_energy() const { return min_; }
  double max_energy() const { return max_; }

  // Not clipped: out-of-range energies map outside [0, 1].
  double normalize(double energy) const { return (energy - min_) / (max_ - min_); }
  double denormalize(double value) const { return min_ + value * (max_ - min_); }

 private:
  std::string device_;
  double min_;
  double max_;
};

}  // namespace eanas
