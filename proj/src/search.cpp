#include "eanas/search.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <thread>

#include "eanas/errors.hpp"
#include "eanas/util.hpp"

namespace eanas {

void SearchConfig::validate() const {
  if (!(budget_tau > 0.0)) throw std::invalid_argument("budget_tau must be > 0 (or infinite)");
  if (max_iterations == 0) throw std::invalid_argument("max_iterations must be >= 1");
  if (stage_enumeration_limit == 0 && sample_fallback == 0) {
    throw std::invalid_argument("either enumeration or sampling must produce candidates");
  }
}

bool preferred(const CandidateScore& a, const CandidateScore& b) {
  if (a.feasible != b.feasible) return a.feasible;
  if (a.feasible) {
    if (a.score != b.score) return a.score > b.score;
    if (a.energy != b.energy) return a.energy < b.energy;
  } else {
    if (a.energy != b.energy) return a.energy < b.energy;
    if (a.score != b.score) return a.score > b.score;
  }
  return a.index < b.index;
}

namespace {

bool is_feasible(double energy, double tau) { return !std::isnan(energy) && energy <= tau; }

// Stage hot indices straight from a canonical stage index, in the same order
// as stage_hot_indices().
std::size_t stage_index_hot(StageKind stage, std::uint64_t index, std::array<std::uint32_t, 12>& out) {
  const std::size_t n = stage_block_count(stage);
  const std::size_t offset = stage_block_offset(stage);
  for (std::size_t i = n; i-- > 0;) {
    const auto hot = block_hot_indices(offset + i, BlockChoice::from_index(static_cast<std::size_t>(index % 18)));
    std::copy(hot.begin(), hot.end(), out.begin() + static_cast<std::ptrdiff_t>(3 * i));
    index /= 18;
  }
  return 3 * n;
}

// Scores candidates for one stage with the other stages fixed. First-layer
// column sums of the fixed stages (and the device slot) are cached; the
// accumulation order matches Network::forward_active, so scores and energies
// are bit-identical to proxy_score() and TwoStageEstimator::predict().
class StageEvaluator {
 public:
  StageEvaluator(const Network& proxy, const TwoStageEstimator& est, const DetectorArchitecture& context,
                 StageKind stage, const DeviceId& device, double tau)
      : stage_(stage), tau_(tau) {
    stage_pos_ = static_cast<std::size_t>(stage);
    nets_[0] = cache_for(proxy, context, std::nullopt);
    nets_[1] = cache_for(est.base(), context, std::nullopt);
    nets_[2] = cache_for(est.residual(), context, static_cast<std::uint32_t>(kArchEncodingDim + device.index));
  }

  struct Scratch {
    Eigen::VectorXd pre;
    Eigen::VectorXd sum;
  };

  CandidateScore evaluate(std::uint64_t index, Scratch& scratch) const {
    std::array<std::uint32_t, 12> hot{};
    const std::size_t count = stage_index_hot(stage_, index, hot);
    const std::span<const std::uint32_t> active(hot.data(), count);
    CandidateScore c;
    c.index = index;
    c.score = run(nets_[0], active, scratch);
    const double base = snap_energy(run(nets_[1], active, scratch));
    const double residual = snap_energy(run(nets_[2], active, scratch));
    c.energy = base + residual;
    c.feasible = is_feasible(c.energy, tau_);
    return c;
  }

 private:
  struct NetCache {
    const Network* net = nullptr;
    std::array<Eigen::VectorXd, 3> stage_sums;
    std::optional<Eigen::VectorXd> device_sum;
  };

  NetCache cache_for(const Network& net, const DetectorArchitecture& context, std::optional<std::uint32_t> device_slot) {
    NetCache c;
    c.net = &net;
    for (std::size_t s = 0; s < kStageOrder.size(); ++s) {
      if (s == stage_pos_) continue;
      c.stage_sums[s] = net.first_layer_group_sum(stage_hot_indices(context.stage(kStageOrder[s])));
    }
    if (device_slot) {
      const std::array<std::uint32_t, 1> slot{*device_slot};
      c.device_sum = net.first_layer_group_sum(slot);
    }
    return c;
  }

  double run(const NetCache& c, std::span<const std::uint32_t> active, Scratch& scratch) const {
    const Eigen::MatrixXd& w = c.net->weight(0);
    scratch.pre = c.net->bias(0);
    for (std::size_t s = 0; s < kStageOrder.size(); ++s) {
      if (s == stage_pos_) {
        scratch.sum.setZero(w.rows());
        for (std::uint32_t i : active) scratch.sum += w.col(i);
        scratch.pre += scratch.sum;
      } else {
        scratch.pre += c.stage_sums[s];
      }
    }
    if (c.device_sum) scratch.pre += *c.device_sum;
    return c.net->forward_from_preactivation(scratch.pre);
  }

  StageKind stage_;
  std::size_t stage_pos_ = 0;
  double tau_;
  std::array<NetCache, 3> nets_;
};

std::vector<std::uint64_t> sampled_candidates(StageKind stage, std::uint64_t incumbent, const SearchConfig& cfg,
                                              std::size_t iteration) {
  std::mt19937_64 rng(derive_seed(cfg.rng_seed, std::string("search.") + std::string(stage_name(stage)), iteration));
  std::uniform_int_distribution<std::uint64_t> pick(0, stage_space_size(stage) - 1);
  std::vector<std::uint64_t> out;
  out.reserve(cfg.sample_fallback + 1);
  for (std::size_t i = 0; i < cfg.sample_fallback; ++i) out.push_back(pick(rng));
  out.push_back(incumbent);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

template <typename IndexAt>
CandidateScore best_candidate(const StageEvaluator& eval, std::size_t count, IndexAt index_at, std::size_t workers) {
  auto scan = [&](std::size_t first, std::size_t last) {
    StageEvaluator::Scratch scratch;
    CandidateScore best = eval.evaluate(index_at(first), scratch);
    for (std::size_t i = first + 1; i < last; ++i) {
      const CandidateScore c = eval.evaluate(index_at(i), scratch);
      if (preferred(c, best)) best = c;
    }
    return best;
  };
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(1, count / 1024));
  if (workers == 1) return scan(0, count);

  std::vector<CandidateScore> partial(workers);
  std::vector<std::thread> threads;
  const std::size_t chunk = (count + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t first = w * chunk;
    const std::size_t last = std::min(count, first + chunk);
    threads.emplace_back([&, w, first, last] { partial[w] = scan(first, last); });
  }
  for (auto& t : threads) t.join();
  // preferred() is a strict total order (indices are unique), so the
  // reduction does not depend on chunking.
  CandidateScore best = partial.front();
  for (const auto& c : partial) {
    if (preferred(c, best)) best = c;
  }
  return best;
}

}  // namespace

double proxy_score(const Network& map_proxy, const DetectorArchitecture& a) {
  const std::array<std::vector<std::uint32_t>, 3> stages{stage_hot_indices(a.backbone()), stage_hot_indices(a.fpn()),
                                                         stage_hot_indices(a.pan())};
  const std::array<std::span<const std::uint32_t>, 3> groups{stages[0], stages[1], stages[2]};
  return map_proxy.forward_active(groups);
}

void check_search_inputs(const Network& map_proxy, const TwoStageEstimator& energy, const SearchConfig& cfg) {
  cfg.validate();
  if (map_proxy.input_dim() != kArchEncodingDim || map_proxy.output_dim() != 1) {
    throw std::invalid_argument("mAP proxy must map " + std::to_string(kArchEncodingDim) +
                                "-dim block encodings to a scalar; got input " +
                                std::to_string(map_proxy.input_dim()));
  }
  if (energy.encoding_dim() != kArchEncodingDim) {
    throw std::invalid_argument("energy estimator encoding length " + std::to_string(energy.encoding_dim()) +
                                " does not match the block search space (" + std::to_string(kArchEncodingDim) + ")");
  }
  energy.check_device(cfg.device);
}

SearchState stage_argmax(const SearchState& state, StageKind stage, const Network& map_proxy,
                         const TwoStageEstimator& energy, const SearchConfig& cfg) {
  check_search_inputs(map_proxy, energy, cfg);
  const StageEvaluator eval(map_proxy, energy, state.current, stage, cfg.device, cfg.budget_tau);
  const std::uint64_t incumbent = state.current.stage(stage).index();
  const std::uint64_t space = stage_space_size(stage);

  CandidateScore best;
  std::size_t count = 0;
  if (space <= cfg.stage_enumeration_limit) {
    count = static_cast<std::size_t>(space);
    best = best_candidate(eval, count, [](std::size_t i) { return static_cast<std::uint64_t>(i); }, cfg.workers);
  } else {
    const auto candidates = sampled_candidates(stage, incumbent, cfg, state.iteration);
    count = candidates.size();
    best = best_candidate(eval, count, [&](std::size_t i) { return candidates[i]; }, cfg.workers);
  }

  SearchState next = state;
  const StageArchitecture chosen = StageArchitecture::from_index(stage, best.index);
  next.current = state.current.with_stage(chosen);
  next.history.push_back(StageStep{state.iteration, stage, chosen, best.score, best.energy, best.feasible, count});
  return next;
}

SearchResult search(const DetectorArchitecture& init, const Network& map_proxy, const TwoStageEstimator& energy,
                    const SearchConfig& cfg) {
  check_search_inputs(map_proxy, energy, cfg);
  SearchState state{init, 0, {}};
  SearchResult result{init, 0.0, 0.0, false, std::nullopt, 0, {}};
  for (std::size_t it = 1; it <= cfg.max_iterations; ++it) {
    state.iteration = it;
    const DetectorArchitecture before = state.current;
    for (StageKind stage : kStageOrder) state = stage_argmax(state, stage, map_proxy, energy, cfg);
    result.iterations_run = it;
    if (state.current == before) {
      result.converged_at = it;
      break;
    }
  }
  result.architecture = state.current;
  result.history = std::move(state.history);
  result.proxy_map = proxy_score(map_proxy, result.architecture);
  result.energy = energy.predict(result.architecture, cfg.device);
  result.feasible = is_feasible(result.energy, cfg.budget_tau);
  return result;
}

OptimalityReport local_optimality_check(const DetectorArchitecture& architecture, const Network& map_proxy,
                                        const TwoStageEstimator& energy, const SearchConfig& cfg) {
  check_search_inputs(map_proxy, energy, cfg);
  constexpr std::size_t kKeptViolations = 16;
  auto score_of = [&](const DetectorArchitecture& a, std::uint64_t index) {
    CandidateScore c;
    c.index = index;
    c.score = proxy_score(map_proxy, a);
    c.energy = energy.predict(a, cfg.device);
    c.feasible = is_feasible(c.energy, cfg.budget_tau);
    return c;
  };

  OptimalityReport report;
  for (StageKind stage : kStageOrder) {
    const StageArchitecture& current_stage = architecture.stage(stage);
    const CandidateScore incumbent = score_of(architecture, current_stage.index());
    for (std::uint64_t idx = 0; idx < stage_space_size(stage); ++idx) {
      if (idx == incumbent.index) continue;
      const StageArchitecture candidate = StageArchitecture::from_index(stage, idx);
      const CandidateScore c = score_of(architecture.with_stage(candidate), idx);
      ++report.candidates_checked;
      if (preferred(c, incumbent)) {
        ++report.violation_count;
        if (report.violations.size() < kKeptViolations) {
          report.violations.push_back({stage, candidate, c.score, c.energy, c.feasible});
        }
      }
    }
  }
  return report;
}

namespace {

nlohmann::json stage_blocks_json(const StageArchitecture& s) {
  auto arr = nlohmann::json::array();
  for (const BlockChoice& b : s.blocks()) {
    arr.push_back({b.ratio(), b.kernel(), b.attention() == Attention::Full ? "full" : "lite"});
  }
  return arr;
}

nlohmann::json finite_or_string(double v) {
  if (std::isfinite(v)) return v;
  return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
}

}  // namespace

nlohmann::json stage_step_to_json(const StageStep& step) {
  nlohmann::ordered_json j;
  j["iteration"] = step.iteration;
  j["stage"] = std::string(stage_name(step.stage));
  j["config"] = stage_blocks_json(step.chosen);
  j["score"] = finite_or_string(step.score);
  j["energy"] = finite_or_string(step.energy);
  j["feasible"] = step.feasible;
  j["candidates"] = step.candidates;
  return nlohmann::json::parse(j.dump());
}

std::string trace_jsonl(const std::vector<StageStep>& history) {
  std::string out;
  for (const StageStep& step : history) {
    nlohmann::ordered_json j;
    j["iteration"] = step.iteration;
    j["stage"] = std::string(stage_name(step.stage));
    j["config"] = nlohmann::ordered_json::parse(stage_blocks_json(step.chosen).dump());
    j["score"] = nlohmann::ordered_json::parse(finite_or_string(step.score).dump());
    j["energy"] = nlohmann::ordered_json::parse(finite_or_string(step.energy).dump());
    j["feasible"] = step.feasible;
    j["candidates"] = step.candidates;
    out += j.dump() + "\n";
  }
  return out;
}

nlohmann::json optimality_report_to_json(const OptimalityReport& report) {
  nlohmann::json j;
  j["candidates_checked"] = report.candidates_checked;
  j["violation_count"] = report.violation_count;
  j["ok"] = report.ok();
  auto v = nlohmann::json::array();
  for (const auto& x : report.violations) {
    v.push_back({{"stage", std::string(stage_name(x.stage))},
                 {"config", stage_blocks_json(x.candidate)},
                 {"score", finite_or_string(x.score)},
                 {"energy", finite_or_string(x.energy)},
                 {"feasible", x.feasible}});
  }
  j["violations"] = v;
  return j;
}

}  // namespace eanas
