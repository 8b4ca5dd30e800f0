#pragma once

#include <array>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "aivv/agent_types.hpp"
#include "aivv/engine.hpp"
#include "aivv/event_log.hpp"

namespace aivv {

// Thresholds of the deterministic rule-based agents. Defaults reproduce the
// reference behavior; every knob is configurable because several derivations
// (risk thirds, divergence slope, maneuver signature) are engineering choices
// rather than published constants.
struct StubParams {
  double re_multiplier_fail = 2.0;       // masking-risk limit on e/C
  double se_multiplier_fail = 1.5;       // with sigma > tau, large-error limit
  double se_multiplier_cap = 2.5;        // maneuver override allowed only below this
  double maneuver_net_change = 5.0;      // deg of setpoint change across the frame
  double diverging_slope = 0.02;         // deg/step trend of |deviation| => DIVERGING
  int oscillation_threshold = 4;         // detrended sign changes => oscillatory
  int breaches_for_fine_tune = 3;        // recent gate FAILs => persistent drift
  int breaches_for_recalibrate = 1;      // at most this many => transient
  double inspector_alpha_step = 0.01;    // widening step when the breach is large
  double inspector_multiplier_nudge = 1.5;  // nudge alpha only above this e/C
  int fine_tune_epochs = 50;
  double fine_tune_lr = 1e-4;
};

// Frame shape diagnostics shared by the Failure Manager and System Engineer.
struct FrameStats {
  double peak_deviation = 0.0;  // max |value - median|, deg
  double range = 0.0;           // max - min, deg
  int oscillation_count = 0;    // sign changes of the detrended frame
  double trend_slope = 0.0;     // least-squares slope of |deviation| per step
  bool diverging = false;       // trend_slope > diverging_slope
  double final_deviation = 0.0; // |deviation| of the last frame value
};

// Least-squares frame analysis; requires at least 3 values.
FrameStats analyze_frame(const std::vector<double>& frame,
                         double diverging_slope = 0.02);

FrameBaselineSummary summarize_baseline(const std::vector<double>& series);

// Deterministic rule-based agents. Same context in, same vote out.
AgentVote stub_req_eng_vote(const AgentContext& ctx, const StubParams& p = {});
AgentVote stub_fail_mgr_vote(const AgentContext& ctx, const StubParams& p = {});
AgentVote stub_sys_eng_vote(const AgentContext& ctx, const AgentVote& re_vote,
                            const AgentVote& fm_vote, const StubParams& p = {});
TuningAction stub_inspector_decide(const AgentContext& ctx,
                                   const std::array<AgentVote, 3>& votes,
                                   const StubParams& p = {});

// Sweeps the alpha grid {0.01, ..., 0.10} over the candidate's calibration
// cache and recommends the largest alpha whose bound still covers `error`
// (the tightest covering bound); 0.10 when nothing covers.
TunerAdvice stub_tuner_advice(const Engine& candidate, double error);

using AdviceFn = std::function<TunerAdvice(const Engine&, double)>;

// Result of the training phase of an adaptation, kept separate from the
// per-sample measurement phase so a caller may reuse one fine-tuned candidate
// across consecutive escalations whose corpus and base engine are unchanged
// (fine-tuning is deterministic in those inputs).
struct FineTunePhase {
  bool ok = true;
  std::string note;  // failure wording, reported verbatim by the tuner
};

// Phase one: run the action's fine-tune on the candidate (a no-op success for
// pure recalibration). The candidate is reverted internally on failure.
FineTunePhase tuner_fine_tune(const TuningAction& action, Engine& candidate,
                              const std::vector<WindowPair>& recent_pairs);

// Phase two: measure the (already fine-tuned) candidate on the flagged
// window - one MC prediction, then recalibration at the advised alpha - and
// hand the resulting state back for re-evaluation. A failed phase one returns
// the original gate measurements with its note.
CandidateState tuner_evaluate(const TuningAction& action, Engine& candidate,
                              const AgentContext& ctx, const FineTunePhase& phase,
                              const AdviceFn& advice = {},
                              TunerAdvice* advice_out = nullptr);

// Applies the Inspector's action to the cloned candidate engine and measures
// the resulting state exactly once: fine-tune first when requested, one MC
// prediction on the flagged window, then recalibration at the advised alpha.
// A failed fine-tune returns the original gate measurements with a note. The
// advice function defaults to stub_tuner_advice.
CandidateState tuner_apply(const TuningAction& action, Engine& candidate,
                           const AgentContext& ctx,
                           const std::vector<WindowPair>& recent_pairs,
                           const AdviceFn& advice = {},
                           TunerAdvice* advice_out = nullptr);

enum class BackendKind { Stub, Http };

class HttpAgentBackend;  // backend.hpp
struct HttpBackendConfig;

struct AgentSystemConfig {
  BackendKind backend = BackendKind::Stub;
  StubParams stub;
  std::shared_ptr<HttpAgentBackend> http;  // required when backend == Http
};

// Role dispatcher: routes each call to the rule-based stubs or the HTTP
// backend, validates and clamps whatever comes back, and falls back to the
// stub (marking the call degraded) when the backend cannot produce a
// schema-valid payload.
class AgentSystem {
 public:
  explicit AgentSystem(AgentSystemConfig cfg = {});

  AgentVote req_eng(const AgentContext& ctx);
  AgentVote fail_mgr(const AgentContext& ctx);
  AgentVote sys_eng(const AgentContext& ctx, const AgentVote& re_vote,
                    const AgentVote& fm_vote);
  TuningAction inspector(const AgentContext& ctx, const std::array<AgentVote, 3>& votes);
  TunerAdvice tuner_advice(const Engine& candidate, double error);
  CandidateState apply_tuning(const TuningAction& action, Engine& candidate,
                              const AgentContext& ctx,
                              const std::vector<WindowPair>& recent_pairs,
                              TunerAdvice* advice_out = nullptr);

  const StubParams& stub_params() const { return cfg_.stub; }
  int calls(AgentRole role) const;
  int total_calls() const;
  int degraded_calls() const { return degraded_calls_; }
  bool degraded() const { return degraded_calls_ > 0; }
  void reset_counters();

 private:
  AgentVote http_vote_or_fallback(AgentRole role, const AgentContext& ctx,
                                  const AgentVote* re_vote, const AgentVote* fm_vote);
  TunerAdvice advice_impl(const Engine& candidate, double error);

  AgentSystemConfig cfg_;
  std::map<AgentRole, int> calls_;
  int degraded_calls_ = 0;
};

}  // namespace aivv
