#include "eanas/device.hpp"

#include <cmath>

#include "eanas/errors.hpp"
#include "eanas/util.hpp"

namespace eanas {

DeviceRegistry::DeviceRegistry(std::vector<std::string> names) : names_(std::move(names)) {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i].empty()) throw DataError("device names must be nonempty");
    if (!index_.emplace(names_[i], i).second) throw DataError("duplicate device '" + names_[i] + "'");
  }
}

bool DeviceRegistry::contains(std::string_view name) const { return index_.find(name) != index_.end(); }

DeviceId DeviceRegistry::id(std::string_view name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw DataError("unknown device '" + std::string(name) + "'");
  return {it->first, it->second};
}

DeviceId DeviceRegistry::at(std::size_t index) const {
  if (index >= names_.size()) throw DataError("device index out of range");
  return {names_[index], index};
}

NormalizationStats::NormalizationStats(std::string device, double min_energy, double max_energy)
    : device_(std::move(device)), min_(min_energy), max_(max_energy) {
  if (!std::isfinite(min_) || !std::isfinite(max_) || !(max_ > min_)) {
    throw DataError("normalization for '" + device_ + "' needs max > min (got min " + format_double(min_) +
                    ", max " + format_double(max_) + ")");
  }
}

}  // namespace eanas
