#include "eanas/arch_space.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "eanas/errors.hpp"
#include "eanas/util.hpp"

namespace eanas {

BlockChoice BlockChoice::make(double ratio, int kernel, Attention attention) {
  const auto r = std::find(kRatioChoices.begin(), kRatioChoices.end(), ratio);
  if (r == kRatioChoices.end()) {
    throw DataError("invalid compression ratio " + format_double(ratio) + " (allowed: 0.25, 0.5, 1.0)");
  }
  const auto k = std::find(kKernelChoices.begin(), kKernelChoices.end(), kernel);
  if (k == kKernelChoices.end()) {
    throw DataError("invalid kernel size " + std::to_string(kernel) + " (allowed: 1, 3, 5)");
  }
  if (attention != Attention::Lite && attention != Attention::Full) {
    throw DataError("invalid attention type");
  }
  return BlockChoice(static_cast<std::uint8_t>(r - kRatioChoices.begin()),
                     static_cast<std::uint8_t>(k - kKernelChoices.begin()), attention);
}

BlockChoice BlockChoice::from_index(std::size_t index) {
  if (index >= kBlockChoiceCount) {
    throw DataError("block choice index out of range: " + std::to_string(index));
  }
  return BlockChoice(static_cast<std::uint8_t>(index / 6), static_cast<std::uint8_t>((index / 2) % 3),
                     static_cast<Attention>(index % 2));
}

std::vector<BlockChoice> enumerate_block_choices() {
  std::vector<BlockChoice> out;
  out.reserve(kBlockChoiceCount);
  for (std::size_t i = 0; i < kBlockChoiceCount; ++i) {
    out.push_back(BlockChoice::from_index(i));
  }
  return out;
}

std::size_t stage_block_count(StageKind kind) {
  switch (kind) {
    case StageKind::Backbone:
      return 2;
    case StageKind::Fpn:
    case StageKind::Pan:
      return 4;
  }
  throw InvariantError("unknown stage kind");
}

std::size_t stage_block_offset(StageKind kind) {
  switch (kind) {
    case StageKind::Backbone:
      return 0;
    case StageKind::Fpn:
      return 2;
    case StageKind::Pan:
      return 6;
  }
  throw InvariantError("unknown stage kind");
}

std::string_view stage_name(StageKind kind) {
  switch (kind) {
    case StageKind::Backbone:
      return "backbone";
    case StageKind::Fpn:
      return "fpn";
    case StageKind::Pan:
      return "pan";
  }
  throw InvariantError("unknown stage kind");
}

StageKind parse_stage_kind(std::string_view name) {
  for (StageKind k : kStageOrder) {
    if (stage_name(k) == name) return k;
  }
  throw DataError("unknown stage '" + std::string(name) + "'");
}

std::uint64_t stage_space_size(StageKind kind) {
  std::uint64_t size = 1;
  for (std::size_t i = 0; i < stage_block_count(kind); ++i) size *= kBlockChoiceCount;
  return size;
}

StageArchitecture::StageArchitecture(StageKind kind, std::vector<BlockChoice> blocks)
    : kind_(kind), blocks_(std::move(blocks)) {
  if (blocks_.size() != stage_block_count(kind_)) {
    throw DataError(std::string(stage_name(kind_)) + " stage needs " + std::to_string(stage_block_count(kind_)) +
                    " blocks, got " + std::to_string(blocks_.size()));
  }
}

StageArchitecture StageArchitecture::from_index(StageKind kind, std::uint64_t index) {
  if (index >= stage_space_size(kind)) {
    throw DataError("stage index out of range");
  }
  std::vector<BlockChoice> blocks(stage_block_count(kind));
  for (std::size_t i = blocks.size(); i-- > 0;) {
    blocks[i] = BlockChoice::from_index(static_cast<std::size_t>(index % kBlockChoiceCount));
    index /= kBlockChoiceCount;
  }
  return StageArchitecture(kind, std::move(blocks));
}

std::uint64_t StageArchitecture::index() const {
  std::uint64_t idx = 0;
  for (const BlockChoice& b : blocks_) idx = idx * kBlockChoiceCount + b.index();
  return idx;
}

DetectorArchitecture::DetectorArchitecture(StageArchitecture backbone, StageArchitecture fpn, StageArchitecture pan)
    : backbone_(std::move(backbone)), fpn_(std::move(fpn)), pan_(std::move(pan)) {
  if (backbone_.kind() != StageKind::Backbone || fpn_.kind() != StageKind::Fpn || pan_.kind() != StageKind::Pan) {
    throw DataError("detector stages must be (backbone, fpn, pan)");
  }
}

DetectorArchitecture DetectorArchitecture::from_blocks(std::span<const BlockChoice> blocks) {
  if (blocks.size() != kSearchableBlocks) {
    throw DataError("detector needs " + std::to_string(kSearchableBlocks) + " blocks");
  }
  auto slice = [&](StageKind k) {
    auto first = blocks.begin() + static_cast<std::ptrdiff_t>(stage_block_offset(k));
    return StageArchitecture(k, std::vector<BlockChoice>(first, first + static_cast<std::ptrdiff_t>(stage_block_count(k))));
  };
  return DetectorArchitecture(slice(StageKind::Backbone), slice(StageKind::Fpn), slice(StageKind::Pan));
}

DetectorArchitecture DetectorArchitecture::uniform(BlockChoice choice) {
  std::array<BlockChoice, kSearchableBlocks> blocks;
  blocks.fill(choice);
  return from_blocks(blocks);
}

const StageArchitecture& DetectorArchitecture::stage(StageKind kind) const {
  switch (kind) {
    case StageKind::Backbone:
      return backbone_;
    case StageKind::Fpn:
      return fpn_;
    case StageKind::Pan:
      return pan_;
  }
  throw InvariantError("unknown stage kind");
}

DetectorArchitecture DetectorArchitecture::with_stage(const StageArchitecture& replacement) const {
  DetectorArchitecture out = *this;
  switch (replacement.kind()) {
    case StageKind::Backbone:
      out.backbone_ = replacement;
      break;
    case StageKind::Fpn:
      out.fpn_ = replacement;
      break;
    case StageKind::Pan:
      out.pan_ = replacement;
      break;
  }
  return out;
}

std::array<BlockChoice, kSearchableBlocks> DetectorArchitecture::blocks() const {
  std::array<BlockChoice, kSearchableBlocks> out;
  auto it = out.begin();
  for (StageKind k : kStageOrder) {
    it = std::copy(stage(k).blocks().begin(), stage(k).blocks().end(), it);
  }
  return out;
}

DetectorArchitecture default_initial_architecture() {
  return DetectorArchitecture::uniform(BlockChoice::make(0.5, 3, Attention::Lite));
}

std::array<std::uint32_t, 3> block_hot_indices(std::size_t block_position, BlockChoice choice) {
  const auto base = static_cast<std::uint32_t>(block_position * kSlotsPerBlock);
  return {base + static_cast<std::uint32_t>(choice.ratio_slot()),
          base + 3 + static_cast<std::uint32_t>(choice.kernel_slot()),
          base + 6 + static_cast<std::uint32_t>(choice.attention())};
}

std::vector<std::uint32_t> stage_hot_indices(const StageArchitecture& stage) {
  std::vector<std::uint32_t> out;
  out.reserve(stage.blocks().size() * 3);
  const std::size_t offset = stage_block_offset(stage.kind());
  for (std::size_t i = 0; i < stage.blocks().size(); ++i) {
    for (std::uint32_t idx : block_hot_indices(offset + i, stage.blocks()[i])) out.push_back(idx);
  }
  return out;
}

std::array<std::uint32_t, kHotPerArchitecture> architecture_hot_indices(const DetectorArchitecture& a) {
  std::array<std::uint32_t, kHotPerArchitecture> out{};
  const auto blocks = a.blocks();
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto hot = block_hot_indices(i, blocks[i]);
    std::copy(hot.begin(), hot.end(), out.begin() + static_cast<std::ptrdiff_t>(3 * i));
  }
  return out;
}

EncodingVector encode_architecture(const DetectorArchitecture& a) {
  EncodingVector enc{std::vector<double>(kArchEncodingDim, 0.0)};
  for (std::uint32_t idx : architecture_hot_indices(a)) enc.values[idx] = 1.0;
  return enc;
}

DetectorArchitecture decode_architecture(const EncodingVector& encoding) {
  if (encoding.size() != kArchEncodingDim) {
    throw DataError("architecture encoding must have length " + std::to_string(kArchEncodingDim) + ", got " +
                    std::to_string(encoding.size()));
  }
  // Exactly one 1.0 in each one-hot group, zeros elsewhere.
  auto hot_in = [&](std::size_t first, std::size_t count) {
    std::size_t found = count;
    for (std::size_t i = 0; i < count; ++i) {
      const double v = encoding.values[first + i];
      if (v == 1.0) {
        if (found != count) throw DataError("encoding group has more than one hot slot");
        found = i;
      } else if (v != 0.0) {
        throw DataError("encoding values must be 0 or 1");
      }
    }
    if (found == count) throw DataError("encoding group has no hot slot");
    return found;
  };
  std::array<BlockChoice, kSearchableBlocks> blocks;
  for (std::size_t b = 0; b < kSearchableBlocks; ++b) {
    const std::size_t base = b * kSlotsPerBlock;
    const std::size_t r = hot_in(base, 3);
    const std::size_t k = hot_in(base + 3, 3);
    const std::size_t t = hot_in(base + 6, 2);
    blocks[b] = BlockChoice::from_index(r * 6 + k * 2 + t);
  }
  return DetectorArchitecture::from_blocks(blocks);
}

namespace {

DetectorArchitecture draw_architecture(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, kBlockChoiceCount - 1);
  std::array<BlockChoice, kSearchableBlocks> blocks;
  for (auto& b : blocks) b = BlockChoice::from_index(pick(rng));
  return DetectorArchitecture::from_blocks(blocks);
}

}  // namespace

std::vector<DetectorArchitecture> sample_uniform(std::uint64_t rng_seed, std::size_t n) {
  if (n == 0) throw std::invalid_argument("sample_uniform: n must be at least 1");
  std::mt19937_64 rng(rng_seed);
  std::vector<DetectorArchitecture> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(draw_architecture(rng));
  return out;
}

std::vector<DetectorArchitecture> sample_distinct(std::uint64_t rng_seed, std::size_t n) {
  if (n == 0) throw std::invalid_argument("sample_distinct: n must be at least 1");
  std::mt19937_64 rng(rng_seed);
  std::set<std::array<std::size_t, kSearchableBlocks>> seen;
  std::vector<DetectorArchitecture> out;
  out.reserve(n);
  while (out.size() < n) {
    DetectorArchitecture a = draw_architecture(rng);
    std::array<std::size_t, kSearchableBlocks> key{};
    const auto blocks = a.blocks();
    std::transform(blocks.begin(), blocks.end(), key.begin(), [](BlockChoice b) { return b.index(); });
    if (seen.insert(key).second) out.push_back(std::move(a));
  }
  return out;
}

double analytic_block_cost(BlockChoice b, int channels) {
  if (channels < 1) throw std::invalid_argument("analytic_block_cost: channels must be >= 1");
  const double c = static_cast<double>(channels);
  const double k = static_cast<double>(b.kernel());
  const double attention_mult = b.attention() == Attention::Full ? 1.25 : 1.0;
  return c * c / b.ratio() * k * k * attention_mult;
}

double architecture_cost(const DetectorArchitecture& a, const ReferenceTable& table) {
  const auto blocks = a.blocks();
  double total = 0.0;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    total += table.repeats[i] * analytic_block_cost(blocks[i], table.channels[i]);
  }
  return total;
}

DetectorArchitecture min_cost_architecture() {
  return DetectorArchitecture::uniform(BlockChoice::make(1.0, 1, Attention::Lite));
}

DetectorArchitecture max_cost_architecture() {
  return DetectorArchitecture::uniform(BlockChoice::make(0.25, 5, Attention::Full));
}

std::string_view scale_label_name(ScaleLabel label) {
  switch (label) {
    case ScaleLabel::Nano:
      return "nano";
    case ScaleLabel::Small:
      return "small";
    case ScaleLabel::Medium:
      return "medium";
  }
  throw InvariantError("unknown scale label");
}

ScaleLabel parse_scale_label(std::string_view name) {
  if (name == "nano" || name == "n") return ScaleLabel::Nano;
  if (name == "small" || name == "s") return ScaleLabel::Small;
  if (name == "medium" || name == "m") return ScaleLabel::Medium;
  throw DataError("unknown scale label '" + std::string(name) + "' (expected nano, small or medium)");
}

void ScalingFactor::validate() const {
  if (!(std::isfinite(width_mult) && width_mult > 0.0) || !(std::isfinite(depth_mult) && depth_mult > 0.0)) {
    throw DataError("scaling multipliers must be finite and > 0");
  }
}

ScalingFactor default_scaling_factor(ScaleLabel label) {
  switch (label) {
    case ScaleLabel::Nano:
      return {label, 1.0, 1.0};
    case ScaleLabel::Small:
      return {label, 1.6, 1.33};
    case ScaleLabel::Medium:
      return {label, 2.2, 1.67};
  }
  throw InvariantError("unknown scale label");
}

void validate_factor_ordering(const ScalingFactor& nano, const ScalingFactor& small, const ScalingFactor& medium) {
  nano.validate();
  small.validate();
  medium.validate();
  if (nano.width_mult > small.width_mult || small.width_mult > medium.width_mult ||
      nano.depth_mult > small.depth_mult || small.depth_mult > medium.depth_mult) {
    throw DataError("scaling factors must satisfy nano <= small <= medium component-wise");
  }
}

int round_to_granularity(double channels) {
  const double granules = std::round(channels / kChannelGranularity);
  return kChannelGranularity * std::max(1, static_cast<int>(granules));
}

double ScaledDetector::cost() const {
  ReferenceTable table;
  table.channels = derived_channels;
  table.repeats = derived_repeats;
  return architecture_cost(base, table);
}

ScaledDetector scale_architecture(const DetectorArchitecture& base, const ScalingFactor& factor,
                                  const ReferenceTable& table) {
  factor.validate();
  ScaledDetector out{base, factor, {}, {}};
  for (std::size_t i = 0; i < kSearchableBlocks; ++i) {
    out.derived_channels[i] = round_to_granularity(table.channels[i] * factor.width_mult);
    // Guard against 1.0 * 1.0000000000000002 style overshoot before ceil.
    const double depth = table.repeats[i] * factor.depth_mult;
    const double nearest = std::round(depth);
    out.derived_repeats[i] =
        std::max(1, static_cast<int>(std::abs(depth - nearest) < 1e-9 ? nearest : std::ceil(depth)));
  }
  return out;
}

namespace {

nlohmann::json stage_to_json(const StageArchitecture& s) {
  auto arr = nlohmann::json::array();
  for (const BlockChoice& b : s.blocks()) {
    arr.push_back({b.ratio(), b.kernel(), b.attention() == Attention::Full ? "full" : "lite"});
  }
  return arr;
}

double ratio_from_json(const nlohmann::json& v) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "0.25") return 0.25;
    if (s == "0.5") return 0.5;
    if (s == "1.0" || s == "1") return 1.0;
    throw DataError("invalid ratio string '" + s + "'");
  }
  throw DataError("ratio must be a number");
}

int kernel_from_json(const nlohmann::json& v) {
  if (!v.is_number_integer()) {
    if (v.is_number_float() && v.get<double>() == std::floor(v.get<double>())) {
      return static_cast<int>(v.get<double>());
    }
    throw DataError("kernel must be an integer");
  }
  return v.get<int>();
}

StageArchitecture stage_from_json(StageKind kind, const nlohmann::json& j) {
  if (!j.is_array()) throw DataError(std::string(stage_name(kind)) + " must be an array of blocks");
  std::vector<BlockChoice> blocks;
  for (const auto& entry : j) {
    if (!entry.is_array() || entry.size() != 3 || !entry[2].is_string()) {
      throw DataError("block must be [ratio, kernel, \"lite\"|\"full\"]");
    }
    const auto att = entry[2].get<std::string>();
    Attention attention;
    if (att == "lite") {
      attention = Attention::Lite;
    } else if (att == "full") {
      attention = Attention::Full;
    } else {
      throw DataError("invalid attention '" + att + "'");
    }
    blocks.push_back(BlockChoice::make(ratio_from_json(entry[0]), kernel_from_json(entry[1]), attention));
  }
  return StageArchitecture(kind, std::move(blocks));
}

}  // namespace

nlohmann::json architecture_to_json(const DetectorArchitecture& a) {
  nlohmann::json j = nlohmann::json::object();
  for (StageKind k : kStageOrder) j[std::string(stage_name(k))] = stage_to_json(a.stage(k));
  return j;
}

DetectorArchitecture architecture_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw DataError("architecture must be a JSON object");
  auto get = [&](StageKind k) {
    const std::string key(stage_name(k));
    if (!j.contains(key)) throw DataError("architecture missing '" + key + "'");
    return stage_from_json(k, j.at(key));
  };
  return DetectorArchitecture(get(StageKind::Backbone), get(StageKind::Fpn), get(StageKind::Pan));
}

nlohmann::json scaled_detector_to_json(const ScaledDetector& s) {
  nlohmann::json j = architecture_to_json(s.base);
  j["factor"] = {{"label", std::string(scale_label_name(s.factor.label))},
                 {"width_mult", s.factor.width_mult},
                 {"depth_mult", s.factor.depth_mult}};
  j["derived_channels"] = s.derived_channels;
  j["derived_repeats"] = s.derived_repeats;
  j["cost"] = s.cost();
  return j;
}

std::string block_to_string(BlockChoice b) {
  return "(" + format_double(b.ratio()) + "," + std::to_string(b.kernel()) + "," +
         (b.attention() == Attention::Full ? "full" : "lite") + ")";
}

std::string stage_to_string(const StageArchitecture& s) {
  std::string out = std::string(stage_name(s.kind())) + "[";
  for (std::size_t i = 0; i < s.blocks().size(); ++i) {
    if (i) out += " ";
    out += block_to_string(s.blocks()[i]);
  }
  return out + "]";
}

}  // namespace eanas
