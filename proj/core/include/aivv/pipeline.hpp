#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "aivv/agents.hpp"
#include "aivv/engine.hpp"
#include "aivv/event_log.hpp"
#include "aivv/sentry.hpp"
#include "aivv/sim.hpp"

namespace aivv {

// How much of the verification stack runs on each flagged sample.
//   MathOnly        - the gate label is final; no agent is ever called.
//   MathPlusCouncil - one council deliberation; its majority verdict is final.
//   FullAIVV        - two deliberation rounds with clone-and-promote
//                     adaptation between them.
enum class PipelineMode { MathOnly, MathPlusCouncil, FullAIVV };

std::string to_string(PipelineMode m);
PipelineMode pipeline_mode_from_string(const std::string& s);

struct PipelineConfig {
  PipelineMode mode = PipelineMode::FullAIVV;
  std::uint64_t seed = 1;       // dropout-mask stream for gate evaluations
  int k_max = 2;                // deliberation rounds; the loop is fixed at 2
  AgentSystemConfig agents;
  int fine_tune_window = 100;   // trailing observed pairs offered to FINE_TUNE
  int breach_window = 20;       // trailing samples counted for breach history
  double max_failure_effect = 0.0;  // deg; 0 derives 2x the baseline peak
  int horizon_h = 2;            // prediction horizon used to align setpoints
  double split_ratio = 0.7;     // raw train/test split for the seed harness

  void validate() const;  // throws std::invalid_argument
};

// One council deliberation: the three role votes and their 2-of-3 verdict.
struct CouncilRound {
  int loop = 1;
  std::array<AgentVote, 3> votes;  // req_eng, fail_mgr, sys_eng
  Vote majority = Vote::PASS;
};

void to_json(nlohmann::json& j, const CouncilRound& r);

// FAIL iff at least two of the three votes are FAIL.
Vote majority_vote(const std::array<AgentVote, 3>& votes);
// Throws std::invalid_argument unless exactly three votes are supplied.
Vote majority_vote(const std::vector<AgentVote>& votes);

// Full per-sample audit record: gate measurements, every deliberation, the
// adaptation attempt, and the final label against ground truth.
struct SampleRecord {
  int sample_id = 0;
  bool truth_positive = false;  // target raw index lies inside the fault mask
  double prediction = 0.0;
  double residual = 0.0;
  double bound = 0.0;
  double uncertainty = 0.0;
  double true_value = 0.0;
  GateDecision sentry_initial = GateDecision::PASS;
  std::optional<GateDecision> sentry_recheck;  // candidate re-evaluation
  std::vector<CouncilRound> councils;
  std::optional<TuningAction> action;
  std::optional<CandidateState> candidate;
  bool promoted = false;
  bool degraded = false;  // agent failure; the gate verdict was kept
  Vote final_label = Vote::PASS;
  std::uint64_t param_hash_before = 0;
  std::uint64_t param_hash_after = 0;

  // Structural invariants: promotion requires a candidate that passed
  // re-evaluation, and the deployed hash may change only on promotion.
  void validate() const;
};

void to_json(nlohmann::json& j, const SampleRecord& r);

// Confusion counts treat final FAIL on a faulty sample as a true positive.
struct RunMetrics {
  int tp = 0;
  int tn = 0;
  int fp = 0;
  int fn = 0;
  double accuracy = 0.0;
  std::map<std::string, int> agent_calls;  // keyed by role name
  int total_agent_calls = 0;
  int adaptation_invocations = 0;
  int promotions = 0;
  int degraded_agent_calls = 0;
  int degraded_samples = 0;
  bool seed_success = false;  // >=1 FAIL on faulty samples and 0 on clean ones

  int n_samples() const { return tp + tn + fp + fn; }
};

void to_json(nlohmann::json& j, const RunMetrics& m);
void from_json(const nlohmann::json& j, RunMetrics& m);

struct RunResult {
  RunMetrics metrics;
  std::vector<SampleRecord> records;
};

// Streaming verifier: gates each incoming window and, depending on the mode,
// escalates gate FAILs to the council and the clone-and-promote adaptation
// loop. Degraded agent calls never flip a gate FAIL to PASS silently; the
// sample is labeled FAIL and marked degraded. The dataset reference must
// outlive the pipeline.
class Pipeline {
 public:
  // `baseline_end` is the first raw index of the streamed segment; baseline
  // frame statistics are computed over raw indices [0, baseline_end).
  Pipeline(Engine engine, const TelemetryDataset& dataset, int baseline_end,
           PipelineConfig cfg, EventLog* log = nullptr);

  SampleRecord process_sample(const WindowPair& pair);
  RunResult run_stream(const std::vector<WindowPair>& test_pairs);

  const Engine& engine() const { return engine_; }
  const AgentSystem& agents() const { return agents_; }
  const FrameBaselineSummary& baseline() const { return baseline_; }
  int adaptation_invocations() const { return adaptations_; }
  int promotions() const { return promotions_; }

 private:
  Vote escalate(const SentryDecision& gate, const WindowPair& pair,
                SampleRecord& rec);
  AgentContext make_context(const SentryDecision& gate, const WindowPair& pair,
                            int loop) const;
  void log_council(const CouncilRound& round, int sample_id);
  void log_action(const TuningAction& action, const CouncilRound& round,
                  int sample_id);
  void log_candidate(const CandidateState& state, int sample_id);

  Engine engine_;
  const TelemetryDataset* data_;
  PipelineConfig cfg_;
  AgentSystem agents_;
  EventLog* log_;
  Rng mask_rng_;
  FrameBaselineSummary baseline_;
  double failure_effect_limit_ = 0.0;
  std::deque<bool> breach_history_;
  std::deque<WindowPair> observed_;
  int adaptations_ = 0;
  int promotions_ = 0;
};

// One dataset recipe for the seed harness; the per-run seed overrides
// sim.seed.
struct ScenarioSpec {
  SimConfig sim;
  NoiseSpec noise;
  std::optional<FaultSpec> fault;
};

// Canonical scenario recipes backing the three bundled datasets:
//   1 — hovering with an electrical sensor spike,
//   2 — lawnmower sweep with the same spike,
//   3 — complex mission with a mechanical damper jam.
// The spike is sized to pin the rudder at its saturation limit for the whole
// fault window, so both the stock and any sanely tuned controller see the
// identical worst-case excursion and differ only in how well they recover.
ScenarioSpec dataset_recipe(int index);

struct SeedRunOutcome {
  std::uint64_t seed = 0;
  RunMetrics metrics;    // configured mode
  RunMetrics math_only;  // gate-only labels for the same seed and engine
};

void to_json(nlohmann::json& j, const SeedRunOutcome& o);

// Seed-level roll-up. fvr_percent is the share of seeds where the configured
// mode raised at least one FAIL on faulty samples and none on clean ones.
struct AggregateMetrics {
  int seeds_total = 0;
  int seeds_successful = 0;
  double fvr_percent = 0.0;
  double mean_accuracy_initial = 0.0;  // gate-only labels
  double mean_accuracy_final = 0.0;    // configured-mode labels
  std::vector<SeedRunOutcome> per_seed;
};

void to_json(nlohmann::json& j, const AggregateMetrics& m);

// Chronological calibration split: the trailing round(cal_ratio * n) pairs
// calibrate, the rest fit.
std::pair<std::vector<WindowPair>, std::vector<WindowPair>> split_fit_cal(
    const std::vector<WindowPair>& train_pairs, double cal_ratio);

// Generates the dataset for one seed, trains and calibrates a fresh engine on
// the training split, then streams the test split twice: once gate-only for
// the baseline labels and once in the configured mode.
SeedRunOutcome run_seed(const ScenarioSpec& scenario,
                        const EngineConfig& engine_cfg,
                        const PipelineConfig& pipe_cfg, std::uint64_t seed,
                        EventLog* log = nullptr);

AggregateMetrics run_seeds(const ScenarioSpec& scenario,
                           const EngineConfig& engine_cfg,
                           const PipelineConfig& pipe_cfg,
                           const std::vector<std::uint64_t>& seeds);

}  // namespace aivv
