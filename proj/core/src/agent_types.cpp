#include "aivv/agent_types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "aivv/engine.hpp"

namespace aivv {

std::string to_string(Vote v) { return v == Vote::PASS ? "PASS" : "FAIL"; }

std::string to_string(RiskLevel r) {
  switch (r) {
    case RiskLevel::Low: return "LOW";
    case RiskLevel::Medium: return "MEDIUM";
    case RiskLevel::High: return "HIGH";
    case RiskLevel::None: break;
  }
  throw std::invalid_argument("RiskLevel::None has no string form");
}

std::string to_string(AgentRole r) {
  switch (r) {
    case AgentRole::ReqEng: return "req_eng";
    case AgentRole::FailMgr: return "fail_mgr";
    case AgentRole::SysEng: return "sys_eng";
    case AgentRole::Inspector: return "inspector";
    case AgentRole::Tuner: return "tuner";
  }
  throw std::invalid_argument("unknown AgentRole");
}

std::string to_string(TuningActionKind a) {
  switch (a) {
    case TuningActionKind::Recalibrate: return "RECALIBRATE";
    case TuningActionKind::FineTune: return "FINE_TUNE";
    case TuningActionKind::TryBoth: return "TRY_BOTH";
  }
  throw std::invalid_argument("unknown TuningActionKind");
}

Vote vote_from_string(const std::string& s) {
  if (s == "PASS") return Vote::PASS;
  if (s == "FAIL") return Vote::FAIL;
  throw std::invalid_argument("unknown vote: " + s);
}

RiskLevel risk_level_from_string(const std::string& s) {
  if (s == "LOW") return RiskLevel::Low;
  if (s == "MEDIUM") return RiskLevel::Medium;
  if (s == "HIGH") return RiskLevel::High;
  throw std::invalid_argument("unknown risk level: " + s);
}

AgentRole agent_role_from_string(const std::string& s) {
  if (s == "req_eng") return AgentRole::ReqEng;
  if (s == "fail_mgr") return AgentRole::FailMgr;
  if (s == "sys_eng") return AgentRole::SysEng;
  if (s == "inspector") return AgentRole::Inspector;
  if (s == "tuner") return AgentRole::Tuner;
  throw std::invalid_argument("unknown agent role: " + s);
}

TuningActionKind tuning_action_from_string(const std::string& s) {
  if (s == "RECALIBRATE") return TuningActionKind::Recalibrate;
  if (s == "FINE_TUNE") return TuningActionKind::FineTune;
  if (s == "TRY_BOTH") return TuningActionKind::TryBoth;
  throw std::invalid_argument("unknown tuning action: " + s);
}

std::string trigger_tag(AgentRole r) {
  switch (r) {
    case AgentRole::ReqEng: return "RE";
    case AgentRole::FailMgr: return "FM";
    case AgentRole::SysEng: return "SE";
    case AgentRole::Inspector: return "INSPECTOR";
    case AgentRole::Tuner: return "TUNER";
  }
  throw std::invalid_argument("unknown AgentRole");
}

AgentRole role_from_trigger_tag(const std::string& s) {
  if (s == "RE") return AgentRole::ReqEng;
  if (s == "FM") return AgentRole::FailMgr;
  if (s == "SE") return AgentRole::SysEng;
  if (s == "INSPECTOR") return AgentRole::Inspector;
  if (s == "TUNER") return AgentRole::Tuner;
  throw std::invalid_argument("unknown trigger tag: " + s);
}

void to_json(nlohmann::json& j, const FrameBaselineSummary& s) {
  j = nlohmann::json{{"peak", s.peak},
                     {"range", s.range},
                     {"oscillation_count", s.oscillation_count}};
}

void from_json(const nlohmann::json& j, FrameBaselineSummary& s) {
  j.at("peak").get_to(s.peak);
  j.at("range").get_to(s.range);
  j.at("oscillation_count").get_to(s.oscillation_count);
}

void to_json(nlohmann::json& j, const TrainingBounds& b) {
  j = nlohmann::json{{"yaw_min", b.yaw_min},
                     {"yaw_max", b.yaw_max},
                     {"per_step_min", b.per_step_min},
                     {"per_step_max", b.per_step_max}};
}

void from_json(const nlohmann::json& j, TrainingBounds& b) {
  j.at("yaw_min").get_to(b.yaw_min);
  j.at("yaw_max").get_to(b.yaw_max);
  j.at("per_step_min").get_to(b.per_step_min);
  j.at("per_step_max").get_to(b.per_step_max);
}

double AgentContext::bound_multiplier() const {
  if (bound > 0.0) return residual / bound;
  return residual == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
}

void AgentContext::validate() const {
  if (frame_values.empty()) throw std::invalid_argument("AgentContext: frame_values must be nonempty");
  if (!std::isfinite(residual) || residual < 0.0) throw std::invalid_argument("AgentContext: residual must be finite and >= 0");
  if (!std::isfinite(bound) || bound < 0.0) throw std::invalid_argument("AgentContext: bound must be finite and >= 0");
  if (loop < 1 || loop > 2) throw std::invalid_argument("AgentContext: loop must be 1 or 2");
}

void to_json(nlohmann::json& j, const AgentContext& c) {
  j = nlohmann::json{{"sample_id", c.sample_id},
                     {"residual", c.residual},
                     {"bound", c.bound},
                     {"uncertainty", c.uncertainty},
                     {"prediction", c.prediction},
                     {"true_value", c.true_value},
                     {"bound_multiplier", c.bound_multiplier()},
                     {"frame_values", c.frame_values},
                     {"setpoint_frame", c.setpoint_frame},
                     {"frame_baseline_summary", c.frame_baseline_summary},
                     {"training_bounds", c.training_bounds},
                     {"current_gains",
                      {{"Kp", c.current_gains.kp},
                       {"Ti", c.current_gains.ti},
                       {"Td", c.current_gains.td},
                       {"Reference_Max_Velocity", c.reference_max_velocity}}},
                     {"max_failure_effect", c.max_failure_effect},
                     {"tau", c.tau},
                     {"alpha", c.alpha},
                     {"recent_breach_count", c.recent_breach_count},
                     {"loop", c.loop}};
}

void GainProposal::validate() const {
  if (!(kp > 0.0) || !(ti > 0.0) || !(td > 0.0) || !(reference_max_velocity > 0.0)) {
    throw std::invalid_argument("GainProposal: all gains must be positive");
  }
}

void to_json(nlohmann::json& j, const GainProposal& p) {
  nlohmann::json tags = nlohmann::json::array();
  for (AgentRole r : p.triggered_by) tags.push_back(trigger_tag(r));
  j = nlohmann::json{{"Kp", p.kp},
                     {"Ti", p.ti},
                     {"Td", p.td},
                     {"Reference_Max_Velocity", p.reference_max_velocity},
                     {"triggered_by", tags},
                     {"tuning_reasoning", p.tuning_reasoning},
                     {"sample_id", p.sample_id}};
}

void from_json(const nlohmann::json& j, GainProposal& p) {
  j.at("Kp").get_to(p.kp);
  j.at("Ti").get_to(p.ti);
  j.at("Td").get_to(p.td);
  j.at("Reference_Max_Velocity").get_to(p.reference_max_velocity);
  p.triggered_by.clear();
  if (j.contains("triggered_by")) {
    for (const auto& t : j.at("triggered_by")) {
      p.triggered_by.push_back(role_from_trigger_tag(t.get<std::string>()));
    }
  }
  p.tuning_reasoning = j.value("tuning_reasoning", std::string{});
  p.sample_id = j.value("sample_id", 0);
}

void AgentVote::validate() const {
  nlohmann::json j = *this;
  const std::string err = validate_vote_payload(agent, j);
  if (!err.empty()) throw std::invalid_argument("AgentVote: " + err);
}

void to_json(nlohmann::json& j, const AgentVote& v) {
  j = nlohmann::json{{"agent", to_string(v.agent)},
                     {"vote", to_string(v.vote)},
                     {"confidence", v.confidence},
                     {"reasoning", v.reasoning}};
  j["risk_level"] = v.risk_level == RiskLevel::None ? nlohmann::json(nullptr)
                                                    : nlohmann::json(to_string(v.risk_level));
  if (!v.requirement_section.empty()) j["requirement_section"] = v.requirement_section;
  if (!v.veto_reason.empty()) j["veto_reason"] = v.veto_reason;
  if (!v.failure_management_assessment.empty()) {
    j["failure_management_assessment"] = v.failure_management_assessment;
  }
  if (!v.technical_assessment.empty()) j["technical_assessment"] = v.technical_assessment;
  if (v.tuning_proposal) j["tuning_proposal"] = *v.tuning_proposal;
  if (!v.tuning_reasoning.empty()) j["tuning_reasoning"] = v.tuning_reasoning;
  for (const auto& [key, value] : v.extras.items()) {
    if (!j.contains(key)) j[key] = value;
  }
}

void from_json(const nlohmann::json& j, AgentVote& v) {
  if (j.contains("agent")) v.agent = agent_role_from_string(j.at("agent").get<std::string>());
  v.vote = vote_from_string(j.at("vote").get<std::string>());
  v.confidence = j.at("confidence").get<double>();
  v.reasoning = j.value("reasoning", std::string{});
  v.risk_level = RiskLevel::None;
  if (j.contains("risk_level") && !j.at("risk_level").is_null()) {
    v.risk_level = risk_level_from_string(j.at("risk_level").get<std::string>());
  }
  v.requirement_section = j.value("requirement_section", std::string{});
  v.veto_reason = j.contains("veto_reason") && j.at("veto_reason").is_string()
                      ? j.at("veto_reason").get<std::string>()
                      : std::string{};
  v.failure_management_assessment = j.value("failure_management_assessment", std::string{});
  v.technical_assessment = j.value("technical_assessment", std::string{});
  v.tuning_proposal.reset();
  if (j.contains("tuning_proposal") && j.at("tuning_proposal").is_object()) {
    v.tuning_proposal = j.at("tuning_proposal").get<GainProposal>();
  }
  v.tuning_reasoning = j.value("tuning_reasoning", std::string{});
  // Unrecognized keys are role-specific diagnostics; keep them round-trippable.
  v.extras = nlohmann::json::object();
  static constexpr const char* kKnown[] = {
      "agent",           "vote",
      "confidence",      "reasoning",
      "risk_level",      "requirement_section",
      "veto_reason",     "failure_management_assessment",
      "technical_assessment", "tuning_proposal",
      "tuning_reasoning"};
  for (const auto& [key, value] : j.items()) {
    const bool known = std::any_of(std::begin(kKnown), std::end(kKnown),
                                   [&](const char* k) { return key == k; });
    if (!known) v.extras[key] = value;
  }
}

void TuningAction::validate() const {
  const bool needs_alpha = action != TuningActionKind::FineTune;
  const bool needs_training = action != TuningActionKind::Recalibrate;
  if (needs_alpha && !new_alpha) throw std::invalid_argument("TuningAction: new_alpha required for " + to_string(action));
  if (needs_training && (!epochs || !learning_rate)) {
    throw std::invalid_argument("TuningAction: epochs and learning_rate required for " + to_string(action));
  }
  if (new_alpha && (*new_alpha < kAlphaMin || *new_alpha > kAlphaMax)) {
    throw std::invalid_argument("TuningAction: new_alpha out of bounds");
  }
  if (epochs && (*epochs < kFineTuneEpochsMin || *epochs > kFineTuneEpochsMax)) {
    throw std::invalid_argument("TuningAction: epochs out of bounds");
  }
  if (learning_rate && (*learning_rate < kFineTuneLrMin || *learning_rate > kFineTuneLrMax)) {
    throw std::invalid_argument("TuningAction: learning_rate out of bounds");
  }
  if (pass_votes < 0 || fail_votes < 0) throw std::invalid_argument("TuningAction: negative vote count");
}

void to_json(nlohmann::json& j, const TuningAction& a) {
  j = nlohmann::json{{"majority_decision", to_string(a.majority_decision)},
                     {"pass_votes", a.pass_votes},
                     {"fail_votes", a.fail_votes},
                     {"action", to_string(a.action)},
                     {"reasoning", a.reasoning},
                     {"clamped", a.clamped}};
  j["new_alpha"] = a.new_alpha ? nlohmann::json(*a.new_alpha) : nlohmann::json(nullptr);
  j["epochs"] = a.epochs ? nlohmann::json(*a.epochs) : nlohmann::json(nullptr);
  j["learning_rate"] = a.learning_rate ? nlohmann::json(*a.learning_rate) : nlohmann::json(nullptr);
}

void from_json(const nlohmann::json& j, TuningAction& a) {
  a = parse_tuning_action(j);
}

void CandidateState::validate() const {
  if (!std::isfinite(new_error) || !std::isfinite(new_bound)) {
    throw std::invalid_argument("CandidateState: non-finite measurements");
  }
  if (passes_reevaluation != (new_error <= new_bound)) {
    throw std::invalid_argument("CandidateState: passes_reevaluation inconsistent with error vs bound");
  }
}

void to_json(nlohmann::json& j, const CandidateState& s) {
  j = nlohmann::json{{"new_prediction", s.new_prediction},
                     {"new_bound", s.new_bound},
                     {"new_error", s.new_error},
                     {"new_uncertainty", s.new_uncertainty},
                     {"applied_alpha", s.applied_alpha},
                     {"passes_reevaluation", s.passes_reevaluation}};
  if (!s.note.empty()) j["note"] = s.note;
}

void from_json(const nlohmann::json& j, CandidateState& s) {
  j.at("new_prediction").get_to(s.new_prediction);
  j.at("new_bound").get_to(s.new_bound);
  j.at("new_error").get_to(s.new_error);
  j.at("new_uncertainty").get_to(s.new_uncertainty);
  j.at("applied_alpha").get_to(s.applied_alpha);
  j.at("passes_reevaluation").get_to(s.passes_reevaluation);
  s.note = j.value("note", std::string{});
}

void to_json(nlohmann::json& j, const TunerAdvice& a) {
  j = nlohmann::json{{"recommended_alpha", a.recommended_alpha},
                     {"reasoning", a.reasoning},
                     {"would_pass_at_recommended", a.would_pass_at_recommended},
                     {"confidence", a.confidence}};
}

void from_json(const nlohmann::json& j, TunerAdvice& a) {
  a = parse_tuner_advice(j);
}

namespace {

bool valid_risk_value(const nlohmann::json& v) {
  if (v.is_null()) return true;
  if (!v.is_string()) return false;
  const std::string s = v.get<std::string>();
  return s == "LOW" || s == "MEDIUM" || s == "HIGH";
}

std::string check_common_vote_fields(const nlohmann::json& p) {
  if (!p.is_object()) return "payload is not a JSON object";
  if (!p.contains("vote") || !p.at("vote").is_string()) return "missing string field 'vote'";
  const std::string v = p.at("vote").get<std::string>();
  if (v != "PASS" && v != "FAIL") return "'vote' must be PASS or FAIL, got '" + v + "'";
  if (!p.contains("confidence") || !p.at("confidence").is_number()) {
    return "missing numeric field 'confidence'";
  }
  if (!p.contains("reasoning") || !p.at("reasoning").is_string()) {
    return "missing string field 'reasoning'";
  }
  return {};
}

}  // namespace

std::string validate_vote_payload(AgentRole role, const nlohmann::json& payload) {
  if (auto err = check_common_vote_fields(payload); !err.empty()) return err;
  switch (role) {
    case AgentRole::ReqEng:
      if (!payload.contains("requirement_section") || !payload.at("requirement_section").is_string()) {
        return "req_eng vote missing string field 'requirement_section'";
      }
      if (payload.contains("veto_reason") && !payload.at("veto_reason").is_string() &&
          !payload.at("veto_reason").is_null()) {
        return "req_eng 'veto_reason' must be a string or null";
      }
      break;
    case AgentRole::FailMgr:
      if (!payload.contains("risk_level") || !valid_risk_value(payload.at("risk_level"))) {
        return "fail_mgr vote missing valid 'risk_level' (LOW/MEDIUM/HIGH or null)";
      }
      if (!payload.contains("failure_management_assessment") ||
          !payload.at("failure_management_assessment").is_string()) {
        return "fail_mgr vote missing string field 'failure_management_assessment'";
      }
      break;
    case AgentRole::SysEng: {
      if (!payload.contains("risk_level") || !valid_risk_value(payload.at("risk_level"))) {
        return "sys_eng vote missing valid 'risk_level' (LOW/MEDIUM/HIGH or null)";
      }
      if (!payload.contains("technical_assessment") || !payload.at("technical_assessment").is_string()) {
        return "sys_eng vote missing string field 'technical_assessment'";
      }
      if (payload.contains("tuning_proposal") && !payload.at("tuning_proposal").is_null()) {
        const auto& tp = payload.at("tuning_proposal");
        if (!tp.is_object()) return "sys_eng 'tuning_proposal' must be an object";
        for (const char* key : {"Kp", "Ti", "Td", "Reference_Max_Velocity"}) {
          if (!tp.contains(key) || !tp.at(key).is_number()) {
            return std::string("tuning_proposal missing numeric field '") + key + "'";
          }
          if (!(tp.at(key).get<double>() > 0.0)) {
            return std::string("tuning_proposal field '") + key + "' must be positive";
          }
        }
      }
      break;
    }
    case AgentRole::Inspector:
    case AgentRole::Tuner:
      return "role does not produce votes";
  }
  return {};
}

std::string validate_tuning_action_payload(const nlohmann::json& p) {
  if (!p.is_object()) return "payload is not a JSON object";
  if (!p.contains("action") || !p.at("action").is_string()) return "missing string field 'action'";
  const std::string action = p.at("action").get<std::string>();
  if (action != "RECALIBRATE" && action != "FINE_TUNE" && action != "TRY_BOTH") {
    return "'action' must be RECALIBRATE, FINE_TUNE, or TRY_BOTH, got '" + action + "'";
  }
  if (!p.contains("majority_decision") || !p.at("majority_decision").is_string()) {
    return "missing string field 'majority_decision'";
  }
  const std::string md = p.at("majority_decision").get<std::string>();
  if (md != "PASS" && md != "FAIL") return "'majority_decision' must be PASS or FAIL";
  for (const char* key : {"pass_votes", "fail_votes"}) {
    if (!p.contains(key) || !p.at(key).is_number()) {
      return std::string("missing numeric field '") + key + "'";
    }
  }
  if (!p.contains("reasoning") || !p.at("reasoning").is_string()) {
    return "missing string field 'reasoning'";
  }
  const bool needs_alpha = action != "FINE_TUNE";
  const bool needs_training = action != "RECALIBRATE";
  if (needs_alpha && (!p.contains("new_alpha") || !p.at("new_alpha").is_number())) {
    return "'new_alpha' required for action " + action;
  }
  if (needs_training) {
    for (const char* key : {"epochs", "learning_rate"}) {
      if (!p.contains(key) || !p.at(key).is_number()) {
        return std::string("'") + key + "' required for action " + action;
      }
    }
  }
  return {};
}

std::string validate_tuner_advice_payload(const nlohmann::json& p) {
  if (!p.is_object()) return "payload is not a JSON object";
  if (!p.contains("recommended_alpha") || !p.at("recommended_alpha").is_number()) {
    return "missing numeric field 'recommended_alpha'";
  }
  if (!p.contains("reasoning") || !p.at("reasoning").is_string()) {
    return "missing string field 'reasoning'";
  }
  if (!p.contains("would_pass_at_recommended") || !p.at("would_pass_at_recommended").is_boolean()) {
    return "missing boolean field 'would_pass_at_recommended'";
  }
  if (!p.contains("confidence") || !p.at("confidence").is_number()) {
    return "missing numeric field 'confidence'";
  }
  return {};
}

AgentVote parse_agent_vote(AgentRole role, const nlohmann::json& payload) {
  if (auto err = validate_vote_payload(role, payload); !err.empty()) {
    throw std::invalid_argument("parse_agent_vote: " + err);
  }
  AgentVote v = payload.get<AgentVote>();
  v.agent = role;
  v.confidence = std::clamp(v.confidence, 0.0, 1.0);
  return v;
}

TuningAction parse_tuning_action(const nlohmann::json& payload) {
  if (auto err = validate_tuning_action_payload(payload); !err.empty()) {
    throw std::invalid_argument("parse_tuning_action: " + err);
  }
  TuningAction a;
  a.action = tuning_action_from_string(payload.at("action").get<std::string>());
  a.majority_decision = vote_from_string(payload.at("majority_decision").get<std::string>());
  a.pass_votes = std::max(0, static_cast<int>(std::llround(payload.at("pass_votes").get<double>())));
  a.fail_votes = std::max(0, static_cast<int>(std::llround(payload.at("fail_votes").get<double>())));
  a.reasoning = payload.at("reasoning").get<std::string>();
  a.clamped = false;
  const bool needs_alpha = a.action != TuningActionKind::FineTune;
  const bool needs_training = a.action != TuningActionKind::Recalibrate;
  if (needs_alpha) {
    const double raw = payload.at("new_alpha").get<double>();
    const double clamped = std::clamp(raw, kAlphaMin, kAlphaMax);
    if (clamped != raw) a.clamped = true;
    a.new_alpha = clamped;
  }
  if (needs_training) {
    const double raw_epochs = payload.at("epochs").get<double>();
    const int epochs = std::clamp(static_cast<int>(std::llround(raw_epochs)),
                                  kFineTuneEpochsMin, kFineTuneEpochsMax);
    if (static_cast<double>(epochs) != raw_epochs) a.clamped = true;
    a.epochs = epochs;
    const double raw_lr = payload.at("learning_rate").get<double>();
    const double lr = std::clamp(raw_lr, kFineTuneLrMin, kFineTuneLrMax);
    if (lr != raw_lr) a.clamped = true;
    a.learning_rate = lr;
  }
  a.validate();
  return a;
}

TunerAdvice parse_tuner_advice(const nlohmann::json& payload) {
  if (auto err = validate_tuner_advice_payload(payload); !err.empty()) {
    throw std::invalid_argument("parse_tuner_advice: " + err);
  }
  TunerAdvice a;
  const double raw = payload.at("recommended_alpha").get<double>();
  // Snap onto the 0.01-spaced grid, then clamp into the allowed band.
  a.recommended_alpha = std::clamp(std::llround(raw * 100.0) / 100.0, kAlphaMin, kAlphaMax);
  a.reasoning = payload.at("reasoning").get<std::string>();
  a.would_pass_at_recommended = payload.at("would_pass_at_recommended").get<bool>();
  a.confidence = std::clamp(payload.at("confidence").get<double>(), 0.0, 1.0);
  return a;
}

}  // namespace aivv
