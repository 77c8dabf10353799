#pragma once

// Elastic detector search space: block choices, stage/detector architectures,
// one-hot encodings, uniform sampling, analytic cost and compound scaling.

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace eanas {

enum class Attention : std::uint8_t { Lite = 0, Full = 1 };

inline constexpr std::array<double, 3> kRatioChoices{0.25, 0.5, 1.0};
inline constexpr std::array<int, 3> kKernelChoices{1, 3, 5};
inline constexpr std::size_t kBlockChoiceCount = 18;

// One elastic block configuration (compression ratio, kernel size, attention).
// Only the 18 legal combinations are representable.
class BlockChoice {
 public:
  // (0.25, 1, Lite), the first choice in canonical order.
  BlockChoice() = default;

  // Throws DataError when ratio or kernel is not one of the allowed values.
  static BlockChoice make(double ratio, int kernel, Attention attention);
  // Canonical index in [0, 18): ratio-major, then kernel, then Lite before Full.
  static BlockChoice from_index(std::size_t index);

  double ratio() const { return kRatioChoices[ratio_slot_]; }
  int kernel() const { return kKernelChoices[kernel_slot_]; }
  Attention attention() const { return attention_; }

  std::size_t ratio_slot() const { return ratio_slot_; }
  std::size_t kernel_slot() const { return kernel_slot_; }
  std::size_t index() const { return ratio_slot_ * 6 + kernel_slot_ * 2 + static_cast<std::size_t>(attention_); }

  // Member order gives the canonical (ratio, kernel, attention) ordering.
  auto operator<=>(const BlockChoice&) const = default;

 private:
  BlockChoice(std::uint8_t ratio_slot, std::uint8_t kernel_slot, Attention attention)
      : ratio_slot_(ratio_slot), kernel_slot_(kernel_slot), attention_(attention) {}

  std::uint8_t ratio_slot_ = 0;
  std::uint8_t kernel_slot_ = 0;
  Attention attention_ = Attention::Lite;
};

std::vector<BlockChoice> enumerate_block_choices();

enum class StageKind : std::uint8_t { Backbone = 0, Fpn = 1, Pan = 2 };
inline constexpr std::array<StageKind, 3> kStageOrder{StageKind::Backbone, StageKind::Fpn, StageKind::Pan};

std::size_t stage_block_count(StageKind kind);
// Offset of the stage's first block among the 10 searchable blocks.
std::size_t stage_block_offset(StageKind kind);
std::string_view stage_name(StageKind kind);
StageKind parse_stage_kind(std::string_view name);

// Number of configurations of one stage: 18^(blocks in stage).
std::uint64_t stage_space_size(StageKind kind);

class StageArchitecture {
 public:
  // Throws DataError if the block count does not match the stage kind.
  StageArchitecture(StageKind kind, std::vector<BlockChoice> blocks);

  // Mixed-radix decoding of a canonical stage index; first block most significant.
  static StageArchitecture from_index(StageKind kind, std::uint64_t index);
  std::uint64_t index() const;

  StageKind kind() const { return kind_; }
  std::span<const BlockChoice> blocks() const { return blocks_; }

  bool operator==(const StageArchitecture&) const = default;

 private:
  StageKind kind_;
  std::vector<BlockChoice> blocks_;
};

inline constexpr std::size_t kSearchableBlocks = 10;
inline constexpr std::size_t kSlotsPerBlock = 8;  // 3 ratio + 3 kernel + 2 attention
inline constexpr std::size_t kArchEncodingDim = kSearchableBlocks * kSlotsPerBlock;
inline constexpr std::size_t kHotPerArchitecture = kSearchableBlocks * 3;

class DetectorArchitecture {
 public:
  DetectorArchitecture(StageArchitecture backbone, StageArchitecture fpn, StageArchitecture pan);
  // Blocks in backbone, FPN, PAN order.
  static DetectorArchitecture from_blocks(std::span<const BlockChoice> blocks);
  // Every block set to the same choice.
  static DetectorArchitecture uniform(BlockChoice choice);

  const StageArchitecture& backbone() const { return backbone_; }
  const StageArchitecture& fpn() const { return fpn_; }
  const StageArchitecture& pan() const { return pan_; }
  const StageArchitecture& stage(StageKind kind) const;
  DetectorArchitecture with_stage(const StageArchitecture& replacement) const;

  std::array<BlockChoice, kSearchableBlocks> blocks() const;

  bool operator==(const DetectorArchitecture&) const = default;

 private:
  StageArchitecture backbone_;
  StageArchitecture fpn_;
  StageArchitecture pan_;
};

// Default search initialization: every block (0.5, 3, Lite).
DetectorArchitecture default_initial_architecture();

// Dense feature vector consumed by the estimators.
struct EncodingVector {
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  bool operator==(const EncodingVector&) const = default;
};

// Indices of the one-hot slots set to 1.0 for one block / one stage / whole detector.
std::array<std::uint32_t, 3> block_hot_indices(std::size_t block_position, BlockChoice choice);
std::vector<std::uint32_t> stage_hot_indices(const StageArchitecture& stage);
std::array<std::uint32_t, kHotPerArchitecture> architecture_hot_indices(const DetectorArchitecture& a);

EncodingVector encode_architecture(const DetectorArchitecture& a);
// Inverse of encode_architecture; throws DataError on a vector that is not a valid encoding.
DetectorArchitecture decode_architecture(const EncodingVector& encoding);

// Each of the 10 slots drawn independently and uniformly. n == 0 is rejected.
std::vector<DetectorArchitecture> sample_uniform(std::uint64_t rng_seed, std::size_t n);
// Like sample_uniform but rejects repeats, so every returned architecture is distinct.
std::vector<DetectorArchitecture> sample_distinct(std::uint64_t rng_seed, std::size_t n);

// Synthetic cost feature: channels^2 / ratio * kernel^2 * attention multiplier.
double analytic_block_cost(BlockChoice b, int channels);

struct ReferenceTable {
  std::array<int, kSearchableBlocks> channels{128, 256, 64, 128, 128, 256, 64, 128, 128, 256};
  std::array<int, kSearchableBlocks> repeats{1, 1, 1, 1, 1, 1, 1, 1, 1, 1};
};

// Sum over blocks of repeats * analytic_block_cost.
double architecture_cost(const DetectorArchitecture& a, const ReferenceTable& table = {});

// Cheapest and most expensive architectures under the analytic cost.
DetectorArchitecture min_cost_architecture();
DetectorArchitecture max_cost_architecture();

enum class ScaleLabel : std::uint8_t { Nano, Small, Medium };
std::string_view scale_label_name(ScaleLabel label);
ScaleLabel parse_scale_label(std::string_view name);

struct ScalingFactor {
  ScaleLabel label;
  double width_mult;
  double depth_mult;

  // Throws DataError unless both multipliers are finite and strictly positive.
  void validate() const;
};

ScalingFactor default_scaling_factor(ScaleLabel label);

// Nano <= Small <= Medium component-wise; throws DataError otherwise.
void validate_factor_ordering(const ScalingFactor& nano, const ScalingFactor& small, const ScalingFactor& medium);

inline constexpr int kChannelGranularity = 8;

// Nearest multiple of kChannelGranularity, at least one granule.
int round_to_granularity(double channels);

struct ScaledDetector {
  DetectorArchitecture base;
  ScalingFactor factor;
  std::array<int, kSearchableBlocks> derived_channels;
  std::array<int, kSearchableBlocks> derived_repeats;

  double cost() const;
};

ScaledDetector scale_architecture(const DetectorArchitecture& base, const ScalingFactor& factor,
                                  const ReferenceTable& table = {});

// JSON form: {"backbone": [[0.25, 3, "lite"], ...], "fpn": [...], "pan": [...]}.
nlohmann::json architecture_to_json(const DetectorArchitecture& a);
DetectorArchitecture architecture_from_json(const nlohmann::json& j);
nlohmann::json scaled_detector_to_json(const ScaledDetector& s);

std::string block_to_string(BlockChoice b);
std::string stage_to_string(const StageArchitecture& s);

}  // namespace eanas
