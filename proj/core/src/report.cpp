#include "aivv/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

namespace aivv {
namespace {

std::string strf(const char* fmt, ...) {
  va_list args;
  va_start(args, fmt);
  va_list copy;
  va_copy(copy, args);
  const int n = std::vsnprintf(nullptr, 0, fmt, copy);
  va_end(copy);
  std::string out(n > 0 ? static_cast<std::size_t>(n) : 0, '\0');
  if (n > 0) std::vsnprintf(out.data(), out.size() + 1, fmt, args);
  va_end(args);
  return out;
}

// Gain values print like Python floats: one decimal when that is exact,
// otherwise a compact general form.
std::string py_float(double v) {
  if (std::isfinite(v)) {
    const double tenths = v * 10.0;
    if (std::fabs(tenths - std::llround(tenths)) < 1e-9) return strf("%.1f", v);
  }
  return strf("%.4g", v);
}

std::string trigger_join(const std::vector<AgentRole>& roles) {
  if (roles.empty()) return "-";
  std::string out;
  for (std::size_t i = 0; i < roles.size(); ++i) {
    if (i) out += "+";
    out += trigger_tag(roles[i]);
  }
  return out;
}

std::string fm_violation_message(const AgentVote& v) {
  if (v.failure_management_assessment.empty()) return v.reasoning;
  return v.failure_management_assessment + ". " + v.reasoning;
}

ViolationDetail make_detail(int sample_id, const AgentVote& v) {
  ViolationDetail d;
  d.sample_id = sample_id;
  d.message = v.reasoning;
  if (v.agent == AgentRole::ReqEng) {
    d.section = v.requirement_section;
  } else if (v.agent == AgentRole::FailMgr) {
    const auto& e = v.extras;
    if (e.is_object() && e.contains("peak_deviation") && e.contains("response") &&
        e.contains("oscillation_count")) {
      d.has_frame_stats = true;
      d.peak = e.at("peak_deviation").get<double>();
      d.response = e.at("response").get<std::string>();
      d.oscillations = e.at("oscillation_count").get<int>();
    } else {
      d.message = fm_violation_message(v);
    }
  }
  return d;
}

void render_role(std::ostringstream& os, const RoleSummary& r, const char* header,
                 const char* what) {
  os << header << "\n";
  os << strf("  Num of agent calls : %d | Num of FAIL  : %d\n", r.calls, r.fails);
  if (r.test_fail) {
    os << strf("  Test result : FAIL  -- %d/%d %s. First violation at sample %d: %s\n",
               r.fails, r.calls, what, r.first_violation_sample,
               r.first_violation_message.c_str());
    os << "  Violation details (up to 5):\n";
    for (const auto& v : r.violations) {
      if (v.has_frame_stats) {
        os << strf("    - Sample %4d | peak=%.2f | %s | osc=%d | %s\n", v.sample_id,
                   v.peak, v.response.c_str(), v.oscillations, v.message.c_str());
      } else if (!v.section.empty()) {
        os << strf("    - Sample %4d | %s | %s\n", v.sample_id, v.section.c_str(),
                   v.message.c_str());
      } else {
        os << strf("    - Sample %4d | %s\n", v.sample_id, v.message.c_str());
      }
    }
  } else {
    os << strf("  Test result : PASS  -- 0/%d %s\n", r.calls, what);
  }
}

struct TraceCheck {
  double peak = 0.0;
  bool settled = false;
  bool diverged = false;
};

TraceCheck check_trace(const TelemetryDataset& d, int onset, double tolerance) {
  TraceCheck out;
  const int n = static_cast<int>(d.yaw.size());
  for (int i = std::max(0, onset); i < n; ++i) {
    const double dev = d.yaw[i] - d.setpoint[i];
    if (!std::isfinite(dev) || std::fabs(dev) > 1e7) {
      out.diverged = true;
      continue;
    }
    out.peak = std::max(out.peak, std::fabs(dev));
  }
  const int tail = std::max(1, n / 10);
  out.settled = !out.diverged && n > 0;
  for (int i = n - tail; i < n && out.settled; ++i) {
    const double dev = d.yaw[i] - d.setpoint[i];
    if (!std::isfinite(dev) || std::fabs(dev) >= tolerance) out.settled = false;
  }
  return out;
}

}  // namespace

void to_json(nlohmann::json& j, const RoleSummary& r) {
  nlohmann::json violations = nlohmann::json::array();
  for (const auto& v : r.violations) {
    nlohmann::json vj{{"sample_id", v.sample_id},
                      {"section", v.section},
                      {"message", v.message}};
    if (v.has_frame_stats) {
      vj["peak_deviation"] = v.peak;
      vj["response"] = v.response;
      vj["oscillation_count"] = v.oscillations;
    }
    violations.push_back(std::move(vj));
  }
  j = nlohmann::json{{"role", to_string(r.role)},
                     {"calls", r.calls},
                     {"fails", r.fails},
                     {"verdict", r.test_fail ? "FAIL" : "PASS"},
                     {"first_violation_message", r.first_violation_message},
                     {"violations", std::move(violations)}};
  j["first_violation_sample"] = r.first_violation_sample >= 0
                                    ? nlohmann::json(r.first_violation_sample)
                                    : nlohmann::json();
}

void to_json(nlohmann::json& j, const ProposalRecord& p) {
  j = p.proposal;
  j["se_vote"] = to_string(p.se_vote);
}

void to_json(nlohmann::json& j, const VVSummary& s) {
  j = nlohmann::json{{"req_eng", s.req_eng},
                     {"fail_mgr", s.fail_mgr},
                     {"sys_eng", s.sys_eng},
                     {"proposals", s.proposals},
                     {"unique_proposal_samples", s.unique_proposal_samples},
                     {"truncated", s.truncated},
                     {"warning", s.warning}};
}

VVSummary build_vv_summary(const std::vector<Envelope>& events) {
  VVSummary s;
  s.req_eng.role = AgentRole::ReqEng;
  s.fail_mgr.role = AgentRole::FailMgr;
  s.sys_eng.role = AgentRole::SysEng;

  int malformed = 0;
  std::map<int, ViolationDetail> details[3];  // keyed by sample, first FAIL wins
  std::map<int, ProposalRecord> proposals;    // keyed by sample, last wins

  for (const Envelope& env : events) {
    if (env.from_agent != "council") continue;
    if (!env.payload.is_object() || !env.payload.contains("votes") ||
        !env.payload.at("votes").is_array()) {
      ++malformed;
      continue;
    }
    for (const auto& vote_json : env.payload.at("votes")) {
      AgentVote v;
      try {
        v = vote_json.get<AgentVote>();
      } catch (const std::exception&) {
        ++malformed;
        continue;
      }
      RoleSummary* role = nullptr;
      int slot = 0;
      switch (v.agent) {
        case AgentRole::ReqEng: role = &s.req_eng; slot = 0; break;
        case AgentRole::FailMgr: role = &s.fail_mgr; slot = 1; break;
        case AgentRole::SysEng: role = &s.sys_eng; slot = 2; break;
        default: break;
      }
      if (!role) continue;
      ++role->calls;
      if (v.vote == Vote::FAIL) {
        ++role->fails;
        role->test_fail = true;
        const std::string first_msg =
            v.agent == AgentRole::FailMgr ? fm_violation_message(v) : v.reasoning;
        if (role->first_violation_sample < 0) {
          role->first_violation_sample = env.sample_id;
          role->first_violation_message = first_msg;
        }
        details[slot].emplace(env.sample_id, make_detail(env.sample_id, v));
      }
      if (v.agent == AgentRole::SysEng && v.tuning_proposal.has_value()) {
        proposals[env.sample_id] = ProposalRecord{env.sample_id, v.vote, *v.tuning_proposal};
      }
    }
  }

  RoleSummary* roles[3] = {&s.req_eng, &s.fail_mgr, &s.sys_eng};
  for (int i = 0; i < 3; ++i) {
    for (const auto& [sample, detail] : details[i]) {
      if (roles[i]->violations.size() >= 5) break;
      roles[i]->violations.push_back(detail);
    }
  }
  s.proposals.reserve(proposals.size());
  for (const auto& [sample, record] : proposals) s.proposals.push_back(record);
  s.unique_proposal_samples = static_cast<int>(s.proposals.size());

  if (malformed > 0) {
    s.truncated = true;
    s.warning = strf("%d malformed log entr%s skipped; summary may be partial",
                     malformed, malformed == 1 ? "y" : "ies");
  }
  return s;
}

VVSummary build_vv_summary_from_file(const std::filesystem::path& jsonl_path) {
  const EventLogReadResult read = read_event_log(jsonl_path);
  VVSummary s = build_vv_summary(read.events);
  if (read.skipped_lines > 0) {
    s.truncated = true;
    const std::string note = strf("%d unreadable line%s skipped", read.skipped_lines,
                                  read.skipped_lines == 1 ? "" : "s");
    s.warning = s.warning.empty() ? note : s.warning + "; " + note;
  }
  return s;
}

std::string render_vv_text(const VVSummary& s) {
  std::ostringstream os;
  os << "V&V Summary (Agentic System Verification & Validation)\n";
  render_role(os, s.req_eng, "[Requirements Engineer -- Normal Mode V&V]",
              "sampled windows violated operational requirements");
  render_role(os, s.fail_mgr, "[Failure Manager -- Failure Mode V&V]",
              "fault-suspect windows violated failure management requirements");

  os << "[System Engineer -- Active Optimizer]\n";
  os << strf("  Num of agent calls : %d | Fail Votes  : %d\n", s.sys_eng.calls,
             s.sys_eng.fails);
  os << strf("  Gain-Tuning Proposals (%d unique samples, triggered by FM/RE FAIL, "
             "showing up to 5):\n",
             s.unique_proposal_samples);
  int shown = 0;
  for (const auto& p : s.proposals) {
    if (shown++ >= 5) break;
    os << strf("    - Sample %4d | Triggered by: %s | SE Vote=%s | Params: "
               "{'Kp': %s, 'Ti': %s, 'Td': %s, 'Reference_Max_Velocity': %s}\n",
               p.sample_id, trigger_join(p.proposal.triggered_by).c_str(),
               to_string(p.se_vote).c_str(), py_float(p.proposal.kp).c_str(),
               py_float(p.proposal.ti).c_str(), py_float(p.proposal.td).c_str(),
               py_float(p.proposal.reference_max_velocity).c_str());
    if (!p.proposal.tuning_reasoning.empty())
      os << "      Reason: " << p.proposal.tuning_reasoning << "\n";
  }
  if (s.truncated) os << "  [warning] " << s.warning << "\n";
  return os.str();
}

void to_json(nlohmann::json& j, const GainVerification& v) {
  j = nlohmann::json{{"peak_deviation_before", v.peak_deviation_before},
                     {"peak_deviation_after", v.peak_deviation_after},
                     {"settled_before", v.settled_before},
                     {"settled_after", v.settled_after},
                     {"diverged_before", v.diverged_before},
                     {"diverged_after", v.diverged_after},
                     {"settle_tolerance_deg", v.settle_tolerance_deg}};
}

GainVerification verify_gain_proposal(const SimConfig& sim, const NoiseSpec& noise,
                                      const std::optional<FaultSpec>& fault,
                                      const GainProposal& proposal,
                                      double settle_tolerance_deg) {
  proposal.validate();
  if (!(settle_tolerance_deg > 0.0))
    throw std::invalid_argument("verify_gain_proposal: tolerance must be positive");

  // Post-fault window: a spike is transient, so controller recovery starts
  // once it clears; a damper fault persists from onset onward.
  int onset = 0;
  if (fault) {
    onset = fault->kind == FaultKind::ElectricalSpike ? fault->onset + fault->duration
                                                      : fault->onset;
  }

  // A run whose integration blows up is reported as diverged rather than
  // aborting the comparison: the other side's numbers are still useful.
  const auto checked_run = [&](const SimConfig& cfg) {
    TraceCheck c;
    try {
      c = check_trace(simulate(cfg, noise, fault), onset, settle_tolerance_deg);
    } catch (const std::runtime_error&) {
      c.peak = std::numeric_limits<double>::infinity();
      c.settled = false;
      c.diverged = true;
    }
    return c;
  };

  SimConfig tuned = sim;
  tuned.pid.kp = proposal.kp;
  tuned.pid.ti = proposal.ti;
  tuned.pid.td = proposal.td;
  tuned.ref_filter.max_velocity = proposal.reference_max_velocity;

  const TraceCheck b = checked_run(sim);
  const TraceCheck a = checked_run(tuned);

  GainVerification out;
  out.settle_tolerance_deg = settle_tolerance_deg;
  out.peak_deviation_before = b.peak;
  out.settled_before = b.settled;
  out.diverged_before = b.diverged;
  out.peak_deviation_after = a.peak;
  out.settled_after = a.settled;
  out.diverged_after = a.diverged;
  return out;
}

}  // namespace aivv
