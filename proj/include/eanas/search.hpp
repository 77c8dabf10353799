#pragma once

// Budget-constrained coordinate search over backbone -> FPN -> PAN.
//
// Each stage step scores every candidate for one stage with the other two
// stages held fixed and keeps the feasible candidate with the highest proxy
// score. Preference order between two candidates:
//   feasible beats infeasible;
//   among feasible: higher score, then lower energy, then lower stage index;
//   among infeasible: lower energy, then higher score, then lower stage index.
// The incumbent stage configuration is always a candidate.

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "eanas/arch_space.hpp"
#include "eanas/energy_estimator.hpp"
#include "eanas/mlp.hpp"

namespace eanas {

struct SearchConfig {
  double budget_tau = std::numeric_limits<double>::infinity();
  std::size_t max_iterations = 4;
  std::uint64_t stage_enumeration_limit = std::uint64_t{1} << 20;
  std::size_t sample_fallback = 4096;
  std::uint64_t rng_seed = 0;
  DeviceId device;
  std::size_t workers = 1;

  // Throws std::invalid_argument on a non-positive budget or zero iterations.
  void validate() const;
};

struct StageStep {
  std::size_t iteration = 0;
  StageKind stage = StageKind::Backbone;
  StageArchitecture chosen;
  double score = 0.0;
  double energy = 0.0;
  bool feasible = false;
  std::size_t candidates = 0;
};

struct SearchState {
  DetectorArchitecture current;
  std::size_t iteration = 0;
  std::vector<StageStep> history;
};

struct SearchResult {
  DetectorArchitecture architecture;
  double proxy_map = 0.0;
  double energy = 0.0;
  bool feasible = false;  // energy <= budget_tau
  std::optional<std::size_t> converged_at;
  std::size_t iterations_run = 0;
  std::vector<StageStep> history;
};

// One scored candidate, used for the preference order above.
struct CandidateScore {
  std::uint64_t index = 0;  // canonical stage index
  double score = 0.0;
  double energy = 0.0;
  bool feasible = false;
};

// True when `a` is strictly preferred to `b`.
bool preferred(const CandidateScore& a, const CandidateScore& b);

// Proxy score of a full architecture via the sparse one-hot path.
double proxy_score(const Network& map_proxy, const DetectorArchitecture& a);

// Throws std::invalid_argument when the proxy or estimator do not consume
// 80-dim block encodings, or the device is unknown to the estimator.
void check_search_inputs(const Network& map_proxy, const TwoStageEstimator& energy, const SearchConfig& cfg);

SearchState stage_argmax(const SearchState& state, StageKind stage, const Network& map_proxy,
                         const TwoStageEstimator& energy, const SearchConfig& cfg);

SearchResult search(const DetectorArchitecture& init, const Network& map_proxy, const TwoStageEstimator& energy,
                    const SearchConfig& cfg);

struct OptimalityViolation {
  StageKind stage;
  StageArchitecture candidate;
  double score;
  double energy;
  bool feasible;
};

struct OptimalityReport {
  std::size_t candidates_checked = 0;
  std::size_t violation_count = 0;
  std::vector<OptimalityViolation> violations;  // first few, for display

  bool ok() const { return violation_count == 0; }
};

// Exhaustively re-scores every single-stage replacement of the result with
// full forward passes and reports any that is strictly preferred.
OptimalityReport local_optimality_check(const DetectorArchitecture& architecture, const Network& map_proxy,
                                        const TwoStageEstimator& energy, const SearchConfig& cfg);

nlohmann::json stage_step_to_json(const StageStep& step);
// One JSON object per line, LF-terminated.
std::string trace_jsonl(const std::vector<StageStep>& history);
nlohmann::json optimality_report_to_json(const OptimalityReport& report);

}  // namespace eanas
