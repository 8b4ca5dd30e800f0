#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "aivv/sim.hpp"

namespace aivv {

enum class Vote { PASS, FAIL };
enum class RiskLevel { None, Low, Medium, High };
enum class AgentRole { ReqEng, FailMgr, SysEng, Inspector, Tuner };
enum class TuningActionKind { Recalibrate, FineTune, TryBoth };

std::string to_string(Vote v);
std::string to_string(RiskLevel r);  // "LOW"/"MEDIUM"/"HIGH"; None has no string
std::string to_string(AgentRole r);  // "req_eng", "fail_mgr", "sys_eng", "inspector", "tuner"
std::string to_string(TuningActionKind a);
Vote vote_from_string(const std::string& s);
RiskLevel risk_level_from_string(const std::string& s);
AgentRole agent_role_from_string(const std::string& s);
TuningActionKind tuning_action_from_string(const std::string& s);

// Short attribution tags used in proposal records and summaries: "RE", "FM",
// "SE", "INSPECTOR", "TUNER".
std::string trigger_tag(AgentRole r);
AgentRole role_from_trigger_tag(const std::string& s);

// Aggregate shape statistics of a telemetry frame.
struct FrameBaselineSummary {
  double peak = 0.0;          // max |deviation from frame median|, deg
  double range = 0.0;         // max - min, deg
  int oscillation_count = 0;  // sign changes of the detrended frame
};

void to_json(nlohmann::json& j, const FrameBaselineSummary& s);
void from_json(const nlohmann::json& j, FrameBaselineSummary& s);

// Operating-envelope limits the Requirements Engineer checks against.
struct TrainingBounds {
  double yaw_min = -180.0;
  double yaw_max = 180.0;
  double per_step_min = -10.0;
  double per_step_max = 10.0;
};

void to_json(nlohmann::json& j, const TrainingBounds& b);
void from_json(const nlohmann::json& j, TrainingBounds& b);

// Everything an agent sees about the flagged sample: gate measurements, the
// trailing telemetry frame, baseline statistics, envelope limits, controller
// gains, and breach history.
struct AgentContext {
  int sample_id = 0;
  double residual = 0.0;     // e_t = |mu_t - y_t|, deg
  double bound = 0.0;        // C_alpha, deg
  double uncertainty = 0.0;  // sigma_t, deg
  double prediction = 0.0;   // mu_t, deg
  double true_value = 0.0;   // y_t, deg
  std::vector<double> frame_values;    // trailing measured yaw ending at y_t, deg
  std::vector<double> setpoint_frame;  // commanded headings aligned with frame_values
  std::vector<double> input_window;    // model input window for re-measurement
  FrameBaselineSummary frame_baseline_summary;  // from training data
  TrainingBounds training_bounds;
  PidGains current_gains;
  double reference_max_velocity = 10.0;  // deg/s
  double max_failure_effect = 0.0;       // deg; peak-deviation limit
  double tau = 0.0;                      // tau_alpha, deg
  double alpha = 0.05;                   // current significance level
  int recent_breach_count = 0;           // gate FAILs in the trailing window, incl. this one
  int loop = 1;                          // deliberation round, 1 or 2

  double bound_multiplier() const;  // e_t / C_alpha
  void validate() const;            // throws std::invalid_argument
};

void to_json(nlohmann::json& j, const AgentContext& c);

// Control-gain adjustment attached by the System Engineer when a peer voted
// FAIL.
struct GainProposal {
  double kp = 0.0;
  double ti = 0.0;
  double td = 0.0;
  double reference_max_velocity = 0.0;
  std::vector<AgentRole> triggered_by;  // subset of {FailMgr, ReqEng}
  std::string tuning_reasoning;
  int sample_id = 0;

  void validate() const;  // all gains positive
};

void to_json(nlohmann::json& j, const GainProposal& p);
void from_json(const nlohmann::json& j, GainProposal& p);

// One council member's verdict. Role-specific string fields are empty when
// they do not apply; extras carries numeric diagnostics (e.g. the Failure
// Manager's peak_deviation/response/oscillation_count).
struct AgentVote {
  AgentRole agent = AgentRole::ReqEng;
  Vote vote = Vote::PASS;
  double confidence = 0.0;
  std::string reasoning;
  RiskLevel risk_level = RiskLevel::None;
  std::string requirement_section;            // Requirements Engineer
  std::string veto_reason;                    // Requirements Engineer, FAIL only
  std::string failure_management_assessment;  // Failure Manager
  std::string technical_assessment;           // System Engineer
  std::optional<GainProposal> tuning_proposal;// System Engineer
  std::string tuning_reasoning;               // System Engineer
  nlohmann::json extras = nlohmann::json::object();

  void validate() const;
};

void to_json(nlohmann::json& j, const AgentVote& v);
void from_json(const nlohmann::json& j, AgentVote& v);

// The Inspector's adaptation decision. Field presence follows the action:
// RECALIBRATE carries new_alpha, FINE_TUNE carries epochs + learning_rate,
// TRY_BOTH carries all three.
struct TuningAction {
  TuningActionKind action = TuningActionKind::Recalibrate;
  std::optional<double> new_alpha;
  std::optional<int> epochs;
  std::optional<double> learning_rate;
  Vote majority_decision = Vote::PASS;
  int pass_votes = 0;
  int fail_votes = 0;
  std::string reasoning;
  bool clamped = false;  // any numeric field was pulled back into bounds

  void validate() const;
};

void to_json(nlohmann::json& j, const TuningAction& a);
void from_json(const nlohmann::json& j, TuningAction& a);

// The candidate engine's post-adaptation measurements, handed back to the
// gate for re-evaluation.
struct CandidateState {
  double new_prediction = 0.0;
  double new_bound = 0.0;
  double new_error = 0.0;
  double new_uncertainty = 0.0;
  double applied_alpha = 0.0;
  bool passes_reevaluation = false;
  std::string note;  // nonempty when adaptation fell back to the original state

  void validate() const;  // passes_reevaluation must equal new_error <= new_bound
};

void to_json(nlohmann::json& j, const CandidateState& s);
void from_json(const nlohmann::json& j, CandidateState& s);

// The Tuner's alpha-grid recommendation.
struct TunerAdvice {
  double recommended_alpha = 0.10;
  std::string reasoning;
  bool would_pass_at_recommended = false;
  double confidence = 0.0;
};

void to_json(nlohmann::json& j, const TunerAdvice& a);
void from_json(const nlohmann::json& j, TunerAdvice& a);

// Schema checks applied to every agent payload regardless of backend. Returns
// an empty string when valid, else a description of the first problem.
std::string validate_vote_payload(AgentRole role, const nlohmann::json& payload);
std::string validate_tuning_action_payload(const nlohmann::json& payload);
std::string validate_tuner_advice_payload(const nlohmann::json& payload);

// Builds an AgentVote from an arbitrary payload (HTTP or stub), clamping
// confidence into [0,1]. Throws std::invalid_argument when the payload fails
// validation.
AgentVote parse_agent_vote(AgentRole role, const nlohmann::json& payload);

// Builds a TuningAction, clamping alpha/epochs/learning_rate into the tuning
// bounds and setting .clamped when anything moved.
TuningAction parse_tuning_action(const nlohmann::json& payload);

TunerAdvice parse_tuner_advice(const nlohmann::json& payload);

}  // namespace aivv
