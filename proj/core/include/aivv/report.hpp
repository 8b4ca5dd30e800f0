#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "aivv/agent_types.hpp"
#include "aivv/event_log.hpp"
#include "aivv/sim.hpp"

namespace aivv {

// One entry of a role's violation list, extracted from a FAIL vote. The frame
// statistics are present only when the vote carried them (the Failure
// Manager's diagnostics).
struct ViolationDetail {
  int sample_id = 0;
  std::string section;  // Requirements Engineer: requirement section
  std::string message;
  bool has_frame_stats = false;
  double peak = 0.0;
  std::string response;  // CONVERGING / DIVERGING
  int oscillations = 0;
};

// Per-role activity rollup. The role's test verdict is FAIL iff it cast at
// least one FAIL vote anywhere in the log.
struct RoleSummary {
  AgentRole role = AgentRole::ReqEng;
  int calls = 0;
  int fails = 0;
  bool test_fail = false;
  int first_violation_sample = -1;  // log order; -1 when the role never failed
  std::string first_violation_message;
  std::vector<ViolationDetail> violations;  // deduped per sample, sorted, <= 5
};

void to_json(nlohmann::json& j, const RoleSummary& r);

// A System Engineer gain proposal with its trigger attribution.
struct ProposalRecord {
  int sample_id = 0;
  Vote se_vote = Vote::PASS;
  GainProposal proposal;
};

void to_json(nlohmann::json& j, const ProposalRecord& p);

struct VVSummary {
  RoleSummary req_eng;
  RoleSummary fail_mgr;
  RoleSummary sys_eng;
  std::vector<ProposalRecord> proposals;  // last proposal per sample, sorted
  int unique_proposal_samples = 0;
  bool truncated = false;  // the log had unreadable or malformed entries
  std::string warning;
};

void to_json(nlohmann::json& j, const VVSummary& s);

// Aggregates council activity out of an event log. Tolerates malformed
// envelopes by skipping them and flagging the summary as truncated.
VVSummary build_vv_summary(const std::vector<Envelope>& events);

// Reads the JSONL log first; skipped lines mark the summary truncated.
VVSummary build_vv_summary_from_file(const std::filesystem::path& jsonl_path);

// Fixed-layout text rendering of the summary.
std::string render_vv_text(const VVSummary& s);

// Closed-loop check of a gain proposal: the same scenario is simulated twice,
// once with the configured gains and once with the proposed ones, under an
// identical seed, noise stream, and fault.
struct GainVerification {
  double peak_deviation_before = 0.0;  // max |yaw - setpoint| after fault onset
  double peak_deviation_after = 0.0;
  bool settled_before = false;  // final 10% of the trace inside the tolerance band
  bool settled_after = false;
  bool diverged_before = false;  // non-finite or absurd trace values
  bool diverged_after = false;
  double settle_tolerance_deg = 2.0;
};

void to_json(nlohmann::json& j, const GainVerification& v);

GainVerification verify_gain_proposal(const SimConfig& sim, const NoiseSpec& noise,
                                      const std::optional<FaultSpec>& fault,
                                      const GainProposal& proposal,
                                      double settle_tolerance_deg = 2.0);

}  // namespace aivv
