#include "aivv/agents.hpp"

#include <algorithm>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <stdexcept>

#include "aivv/backend.hpp"

namespace aivv {

namespace {

std::string strprintf(const char* fmt, ...) {
  va_list args;
  va_start(args, fmt);
  va_list copy;
  va_copy(copy, args);
  const int n = std::vsnprintf(nullptr, 0, fmt, copy);
  va_end(copy);
  std::string out(static_cast<std::size_t>(std::max(0, n)), '\0');
  std::vsnprintf(out.data(), out.size() + 1, fmt, args);
  va_end(args);
  return out;
}

// Least-squares slope of y against its index.
double ls_slope(const std::vector<double>& y) {
  const std::size_t n = y.size();
  if (n < 2) return 0.0;
  const double xbar = (static_cast<double>(n) - 1.0) / 2.0;
  double ybar = 0.0;
  for (double v : y) ybar += v;
  ybar /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = static_cast<double>(i) - xbar;
    sxy += dx * (y[i] - ybar);
    sxx += dx * dx;
  }
  return sxx > 0.0 ? sxy / sxx : 0.0;
}

const char* response_label(const FrameStats& s) {
  return s.diverging ? "DIVERGING" : "CONVERGING";
}

// Deviation centers for a frame: aligned setpoints when available, otherwise
// the frame median.
std::vector<double> deviation_centers(const std::vector<double>& frame,
                                      const std::vector<double>& setpoints) {
  if (!setpoints.empty()) {
    if (setpoints.size() < frame.size()) {
      throw std::invalid_argument("deviation centers: setpoint history shorter than frame");
    }
    return {setpoints.end() - static_cast<std::ptrdiff_t>(frame.size()), setpoints.end()};
  }
  std::vector<double> sorted = frame;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  const double median =
      n % 2 == 1 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  return std::vector<double>(frame.size(), median);
}

FrameStats analyze_against_centers(const std::vector<double>& frame,
                                   const std::vector<double>& centers,
                                   double diverging_slope) {
  FrameStats out;
  const std::size_t n = frame.size();
  std::vector<double> dev(n), abs_dev(n);
  for (std::size_t i = 0; i < n; ++i) {
    dev[i] = frame[i] - centers[i];
    abs_dev[i] = std::abs(dev[i]);
    out.peak_deviation = std::max(out.peak_deviation, abs_dev[i]);
  }
  const auto [lo, hi] = std::minmax_element(frame.begin(), frame.end());
  out.range = *hi - *lo;
  out.final_deviation = abs_dev.back();
  out.trend_slope = ls_slope(abs_dev);
  out.diverging = out.trend_slope > diverging_slope;

  // Oscillations: sign changes of the deviation after removing its trend.
  const double slope = ls_slope(dev);
  double mean = 0.0;
  for (double v : dev) mean += v;
  mean /= static_cast<double>(n);
  const double xbar = (static_cast<double>(n) - 1.0) / 2.0;
  int last_sign = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double resid = dev[i] - (mean + slope * (static_cast<double>(i) - xbar));
    if (std::abs(resid) < 1e-12) continue;
    const int sign = resid > 0.0 ? 1 : -1;
    if (last_sign != 0 && sign != last_sign) ++out.oscillation_count;
    last_sign = sign;
  }
  return out;
}

AgentVote base_vote(AgentRole role, Vote vote, double confidence, std::string reasoning) {
  AgentVote v;
  v.agent = role;
  v.vote = vote;
  v.confidence = confidence;
  v.reasoning = std::move(reasoning);
  return v;
}

RiskLevel risk_from_ratio(double ratio) {
  if (ratio < 1.0 / 3.0) return RiskLevel::Low;
  if (ratio < 2.0 / 3.0) return RiskLevel::Medium;
  return RiskLevel::High;
}

double failure_effect_limit(const AgentContext& ctx) {
  if (ctx.max_failure_effect > 0.0) return ctx.max_failure_effect;
  return 2.0 * ctx.frame_baseline_summary.peak;
}

GainProposal make_gain_proposal(const AgentContext& ctx, bool re_failed, bool fm_failed,
                                const FrameStats& stats, const StubParams& p) {
  GainProposal g;
  g.kp = ctx.current_gains.kp;
  g.ti = ctx.current_gains.ti;
  g.td = ctx.current_gains.td;
  g.reference_max_velocity = ctx.reference_max_velocity;
  g.sample_id = ctx.sample_id;
  if (fm_failed && re_failed) {
    g.kp *= 1.4;
    g.ti *= 0.75;
    g.td *= 1.2;
    g.reference_max_velocity *= 0.9;
    g.triggered_by = {AgentRole::FailMgr, AgentRole::ReqEng};
    g.tuning_reasoning =
        "Since both failure manager and requirements engineer voted FAIL, adjusted "
        "parameters are proposed. Increased Kp to reduce error, decreased Ti to speed "
        "integral correction, increased Td for damping, and reduced the reference "
        "velocity to ease the commanded dynamics.";
  } else if (re_failed) {
    g.kp *= 1.2;
    g.ti *= 0.95;
    g.reference_max_velocity *= 0.95;
    g.triggered_by = {AgentRole::ReqEng};
    g.tuning_reasoning =
        "Since the requirements engineer voted FAIL due to an operational limit "
        "violation, the tuning proposal aims to reduce the error magnitude. The "
        "proportional gain (Kp) is increased slightly and the commanded reference is "
        "slowed.";
  } else {
    g.triggered_by = {AgentRole::FailMgr};
    if (stats.diverging) {
      g.td *= 0.8;
      g.ti *= 1.25;
      g.reference_max_velocity *= 0.9;
      g.tuning_reasoning =
          "Divergent response: decreased Td and increased Ti to stabilize the heading "
          "loop; reference velocity reduced.";
    } else if (stats.oscillation_count >= p.oscillation_threshold) {
      g.kp *= 0.8;
      g.ti *= 1.25;
      g.tuning_reasoning =
          "Low-frequency oscillation: decreased Kp and increased Ti to damp the "
          "oscillation.";
    } else {
      g.kp *= 1.2;
      g.td *= 1.25;
      g.tuning_reasoning =
          "Stale response under high uncertainty: increased Kp and Td to restore "
          "tracking authority.";
    }
  }
  g.validate();
  return g;
}

}  // namespace

FrameStats analyze_frame(const std::vector<double>& frame, double diverging_slope) {
  if (frame.size() < 3) throw std::invalid_argument("analyze_frame: need at least 3 values");
  return analyze_against_centers(frame, deviation_centers(frame, {}), diverging_slope);
}

FrameBaselineSummary summarize_baseline(const std::vector<double>& series) {
  FrameBaselineSummary out;
  if (series.size() < 3) return out;
  const FrameStats stats = analyze_frame(series);
  out.peak = stats.peak_deviation;
  out.range = stats.range;
  out.oscillation_count = stats.oscillation_count;
  return out;
}

AgentVote stub_req_eng_vote(const AgentContext& ctx, const StubParams& p) {
  ctx.validate();
  const auto& b = ctx.training_bounds;
  const double mult = ctx.bound_multiplier();
  const std::size_t n = ctx.frame_values.size();
  const double yaw = ctx.frame_values.back();
  const double prev = n >= 2 ? ctx.frame_values[n - 2] : ctx.frame_values.back();
  const double true_delta = n >= 2 ? yaw - prev : 0.0;
  const double predicted_delta = ctx.prediction - prev;
  const bool yaw_ok = yaw >= b.yaw_min && yaw <= b.yaw_max;
  const bool step_ok = true_delta >= b.per_step_min && true_delta <= b.per_step_max;
  const bool predicted_ok =
      predicted_delta >= b.per_step_min && predicted_delta <= b.per_step_max;

  if (mult > p.re_multiplier_fail) {
    AgentVote v = base_vote(
        AgentRole::ReqEng, Vote::FAIL, 0.9,
        strprintf("Error magnitude %.4f is %.2fx the conformal bound %.4f, exceeding "
                  "the %.1fx masking-risk limit",
                  ctx.residual, mult, ctx.bound, p.re_multiplier_fail));
    v.requirement_section = "Masking Risk";
    v.veto_reason = "Masking Risk";
    return v;
  }
  if (yaw_ok && step_ok) {
    AgentVote v = base_vote(
        AgentRole::ReqEng, Vote::PASS, 0.9,
        strprintf("Yaw %.2f deg and per-step change %.2f deg are within operating "
                  "requirements",
                  yaw, true_delta));
    v.requirement_section = "Normal Operation";
    return v;
  }
  if (predicted_ok) {
    AgentVote v = base_vote(
        AgentRole::ReqEng, Vote::PASS, 0.7,
        "Predicted value is in per-step range despite true value being outside bounds");
    v.requirement_section = "Normal Operation";
    return v;
  }
  AgentVote v = base_vote(AgentRole::ReqEng, Vote::FAIL, 0.9,
                          "Error magnitude exceeds max allowable error");
  v.requirement_section = "Operational Limits";
  v.veto_reason = "Operational Limits";
  return v;
}

AgentVote stub_fail_mgr_vote(const AgentContext& ctx, const StubParams& p) {
  ctx.validate();
  if (ctx.frame_values.size() < 3) {
    AgentVote v = base_vote(AgentRole::FailMgr, Vote::PASS, 0.5,
                            "Frame too short for failure-mode analysis; abstaining");
    v.risk_level = RiskLevel::Low;
    v.failure_management_assessment = "insufficient frame";
    return v;
  }
  const FrameStats stats = analyze_against_centers(
      ctx.frame_values, deviation_centers(ctx.frame_values, ctx.setpoint_frame),
      p.diverging_slope);
  const double limit = failure_effect_limit(ctx);
  const double baseline_peak = ctx.frame_baseline_summary.peak;
  const bool recovering =
      !stats.diverging && stats.final_deviation <= std::max(baseline_peak, 1e-9);

  AgentVote v;
  v.agent = AgentRole::FailMgr;
  v.failure_management_assessment =
      strprintf("peak_deviation=%.2f, response=%s, oscillation_count=%d",
                stats.peak_deviation, response_label(stats), stats.oscillation_count);
  v.risk_level = limit > 0.0 ? risk_from_ratio(stats.peak_deviation / limit)
                             : (stats.peak_deviation > 0.0 ? RiskLevel::High
                                                           : RiskLevel::Low);
  v.extras = nlohmann::json{{"peak_deviation", stats.peak_deviation},
                            {"response", response_label(stats)},
                            {"oscillation_count", stats.oscillation_count},
                            {"frame_range", stats.range},
                            {"final_deviation", stats.final_deviation},
                            {"max_failure_effect", limit}};

  if (stats.peak_deviation > limit && !recovering) {
    v.vote = Vote::FAIL;
    v.confidence = 0.9;
    v.reasoning = strprintf("peak_deviation=%.2f exceeds max_failure_effect=%.2f",
                            stats.peak_deviation, limit);
    return v;
  }
  if (stats.diverging && stats.final_deviation > baseline_peak) {
    v.vote = Vote::FAIL;
    v.confidence = 0.9;
    v.reasoning =
        strprintf("response=DIVERGING with final deviation %.2f above the baseline "
                  "peak %.2f",
                  stats.final_deviation, baseline_peak);
    return v;
  }
  v.vote = Vote::PASS;
  v.confidence = stats.peak_deviation <= 0.5 * limit ? 0.9 : 0.7;
  v.reasoning = strprintf(
      "Peak deviation %.2f < %.2f, range %.2f; failure is contained, and the system "
      "is recovering",
      stats.peak_deviation, limit, stats.range);
  return v;
}

AgentVote stub_sys_eng_vote(const AgentContext& ctx, const AgentVote& re_vote,
                            const AgentVote& fm_vote, const StubParams& p) {
  ctx.validate();
  const double mult = ctx.bound_multiplier();
  FrameStats stats;
  if (ctx.frame_values.size() >= 3) {
    stats = analyze_against_centers(
        ctx.frame_values, deviation_centers(ctx.frame_values, ctx.setpoint_frame),
        p.diverging_slope);
  }
  double setpoint_swing = 0.0;
  if (ctx.setpoint_frame.size() >= 2) {
    const auto [lo, hi] =
        std::minmax_element(ctx.setpoint_frame.begin(), ctx.setpoint_frame.end());
    setpoint_swing = *hi - *lo;
  }
  const bool maneuver = setpoint_swing > p.maneuver_net_change;

  AgentVote v;
  v.agent = AgentRole::SysEng;
  v.extras = nlohmann::json{{"bound_multiplier", mult},
                            {"setpoint_swing", setpoint_swing},
                            {"maneuver_signature", maneuver}};

  if (fm_vote.vote == Vote::FAIL && fm_vote.risk_level == RiskLevel::High) {
    v.vote = Vote::FAIL;
    v.confidence = 0.9;
    v.risk_level = RiskLevel::High;
    v.technical_assessment =
        "failure manager reports a HIGH-risk deviation; confirming the failure";
    v.reasoning = strprintf(
        "The failure manager findings indicate a FAIL vote with HIGH risk; the "
        "deviation is beyond what controller noise or maneuvering can explain "
        "(error %.2fx the conformal bound)",
        mult);
  } else if (maneuver && mult <= p.se_multiplier_cap) {
    v.vote = Vote::PASS;
    v.confidence = 0.7;
    v.risk_level = RiskLevel::Low;
    v.technical_assessment =
        strprintf("commanded heading changed %.1f deg within the frame; drifting "
                  "uncertainty is attributed to the maneuver",
                  setpoint_swing);
    v.reasoning = strprintf(
        "A sudden maneuver (setpoint swing %.1f deg) explains the drifting "
        "uncertainty; error growth stays bounded at %.2fx the conformal bound",
        setpoint_swing, mult);
  } else if (ctx.uncertainty > ctx.tau && mult > p.se_multiplier_fail) {
    v.vote = Vote::FAIL;
    v.confidence = 0.9;
    v.risk_level = RiskLevel::Medium;
    v.technical_assessment =
        strprintf("predictive uncertainty %.4f exceeds the threshold %.4f while the "
                  "error is %.2fx the conformal bound",
                  ctx.uncertainty, ctx.tau, mult);
    v.reasoning =
        "High model uncertainty combined with a large conformal breach indicates a "
        "poor prediction regime rather than benign noise";
  } else {
    v.vote = Vote::PASS;
    v.confidence = 0.9;
    v.risk_level = RiskLevel::Low;
    v.technical_assessment = strprintf(
        "uncertainty %.4f within threshold %.4f; error %.2fx the conformal bound",
        ctx.uncertainty, ctx.tau, mult);
    v.reasoning = strprintf(
        "The failure manager findings indicate a %s vote with %s risk; no "
        "technical vulnerability detected",
        to_string(fm_vote.vote).c_str(),
        fm_vote.risk_level == RiskLevel::None ? "no"
                                              : to_string(fm_vote.risk_level).c_str());
  }

  const bool re_failed = re_vote.vote == Vote::FAIL;
  const bool fm_failed = fm_vote.vote == Vote::FAIL;
  if (re_failed || fm_failed) {
    v.tuning_proposal = make_gain_proposal(ctx, re_failed, fm_failed, stats, p);
    v.tuning_reasoning = v.tuning_proposal->tuning_reasoning;
  }
  return v;
}

TuningAction stub_inspector_decide(const AgentContext& ctx,
                                   const std::array<AgentVote, 3>& votes,
                                   const StubParams& p) {
  ctx.validate();
  TuningAction a;
  a.pass_votes = 0;
  for (const AgentVote& v : votes) {
    if (v.vote == Vote::PASS) ++a.pass_votes;
  }
  a.fail_votes = 3 - a.pass_votes;
  a.majority_decision = a.pass_votes >= 2 ? Vote::PASS : Vote::FAIL;

  const AgentVote* fm = nullptr;
  for (const AgentVote& v : votes) {
    if (v.agent == AgentRole::FailMgr) fm = &v;
  }
  const double mult = ctx.bound_multiplier();
  const double alpha_now = std::clamp(ctx.alpha, kAlphaMin, kAlphaMax);
  double proposed_alpha = alpha_now;
  if (mult > p.inspector_multiplier_nudge) proposed_alpha -= p.inspector_alpha_step;
  proposed_alpha = std::clamp(proposed_alpha, kAlphaMin, kAlphaMax);
  const bool fm_calm = fm != nullptr && fm->vote == Vote::PASS &&
                       (fm->risk_level == RiskLevel::Low ||
                        fm->risk_level == RiskLevel::None);

  if (ctx.recent_breach_count >= p.breaches_for_fine_tune) {
    a.action = TuningActionKind::FineTune;
    a.epochs = p.fine_tune_epochs;
    a.learning_rate = p.fine_tune_lr;
    a.reasoning = strprintf(
        "Persistent drift: %d conformal breaches in the recent window; fine-tuning "
        "the predictor on recent telemetry",
        ctx.recent_breach_count);
  } else if (fm_calm && ctx.recent_breach_count <= p.breaches_for_recalibrate) {
    a.action = TuningActionKind::Recalibrate;
    a.new_alpha = proposed_alpha;
    a.reasoning = strprintf(
        "Transient noise: error %.3f vs bound %.3f with low failure risk; "
        "recalibrating the conformal bound at alpha=%.2f",
        ctx.residual, ctx.bound, proposed_alpha);
  } else {
    a.action = TuningActionKind::TryBoth;
    a.new_alpha = proposed_alpha;
    a.epochs = p.fine_tune_epochs;
    a.learning_rate = p.fine_tune_lr;
    a.reasoning = strprintf(
        "Mixed evidence: %d recent breaches with %s failure-risk context; trying "
        "both recalibration and a fine-tune",
        ctx.recent_breach_count, fm_calm ? "calm" : "elevated");
  }
  a.validate();
  return a;
}

TunerAdvice stub_tuner_advice(const Engine& candidate, double error) {
  if (!candidate.calibrated()) {
    throw std::invalid_argument("stub_tuner_advice: candidate engine not calibrated");
  }
  TunerAdvice adv;
  bool covered = false;
  double covering_alpha = kAlphaMin;
  double widest_bound = 0.0;
  for (int i = 1; i <= 10; ++i) {
    const double alpha = static_cast<double>(i) / 100.0;
    const double bound = candidate.bound_for_alpha(alpha);
    if (i == 1) widest_bound = bound;
    if (error <= bound) {
      covered = true;
      covering_alpha = alpha;  // bounds shrink as alpha grows; keep the largest
    }
  }
  if (covered) {
    adv.recommended_alpha = covering_alpha;
    adv.would_pass_at_recommended = true;
    adv.confidence = 0.9;
    adv.reasoning = strprintf(
        "Alpha grid sweep: the largest significance whose bound still covers the "
        "error %.4f is alpha=%.2f (bound %.4f)",
        error, covering_alpha, candidate.bound_for_alpha(covering_alpha));
  } else {
    adv.recommended_alpha = kAlphaMax;
    adv.would_pass_at_recommended = false;
    adv.confidence = 0.7;
    adv.reasoning = strprintf(
        "Alpha grid sweep: the error %.4f exceeds even the widest bound %.4f at "
        "alpha=0.01; keeping alpha=0.10",
        error, widest_bound);
  }
  return adv;
}

CandidateState tuner_apply(const TuningAction& action, Engine& candidate,
                           const AgentContext& ctx,
                           const std::vector<WindowPair>& recent_pairs,
                           const AdviceFn& advice, TunerAdvice* advice_out) {
  action.validate();
  ctx.validate();
  const auto original_state = [&ctx](std::string note) {
    CandidateState s;
    s.new_prediction = ctx.prediction;
    s.new_bound = ctx.bound;
    s.new_error = ctx.residual;
    s.new_uncertainty = ctx.uncertainty;
    s.applied_alpha = ctx.alpha;
    s.passes_reevaluation = ctx.residual <= ctx.bound;
    s.note = std::move(note);
    return s;
  };
  try {
    if (action.action != TuningActionKind::Recalibrate) {
      const FineTuneResult ft =
          candidate.fine_tune(recent_pairs, *action.epochs, *action.learning_rate);
      if (!ft.ok) return original_state("fine-tune failed: " + ft.note);
    }
    const Prediction pred = candidate.mc_predict(ctx.input_window);
    const double error = std::abs(pred.mean - ctx.true_value);
    if (action.action != TuningActionKind::FineTune) {
      const TunerAdvice adv =
          advice ? advice(candidate, error) : stub_tuner_advice(candidate, error);
      if (advice_out) *advice_out = adv;
      candidate.recalibrate(adv.recommended_alpha);
    }
    CandidateState s;
    s.new_prediction = pred.mean;
    s.new_bound = candidate.conformal_bound();
    s.new_error = error;
    s.new_uncertainty = pred.std;
    s.applied_alpha = candidate.alpha();
    s.passes_reevaluation = error <= s.new_bound;
    s.validate();
    return s;
  } catch (const std::exception& ex) {
    return original_state(std::string("adaptation error: ") + ex.what());
  }
}

AgentSystem::AgentSystem(AgentSystemConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.backend == BackendKind::Http && !cfg_.http) {
    throw std::invalid_argument("AgentSystem: HTTP backend selected but not provided");
  }
}

int AgentSystem::calls(AgentRole role) const {
  const auto it = calls_.find(role);
  return it == calls_.end() ? 0 : it->second;
}

int AgentSystem::total_calls() const {
  int total = 0;
  for (const auto& [role, n] : calls_) total += n;
  return total;
}

void AgentSystem::reset_counters() {
  calls_.clear();
  degraded_calls_ = 0;
}

AgentVote AgentSystem::http_vote_or_fallback(AgentRole role, const AgentContext& ctx,
                                             const AgentVote* re_vote,
                                             const AgentVote* fm_vote) {
  std::string err;
  const auto payload = cfg_.http->complete_json(
      role, ctx.sample_id, render_system_prompt(role),
      render_user_prompt(role, ctx, re_vote, fm_vote), &err);
  if (payload) {
    try {
      return parse_agent_vote(role, *payload);
    } catch (const std::exception&) {
      // schema-invalid payload: fall through to the stub
    }
  }
  ++degraded_calls_;
  switch (role) {
    case AgentRole::ReqEng: return stub_req_eng_vote(ctx, cfg_.stub);
    case AgentRole::FailMgr: return stub_fail_mgr_vote(ctx, cfg_.stub);
    case AgentRole::SysEng: return stub_sys_eng_vote(ctx, *re_vote, *fm_vote, cfg_.stub);
    default: throw std::logic_error("http_vote_or_fallback: role does not vote");
  }
}

AgentVote AgentSystem::req_eng(const AgentContext& ctx) {
  ++calls_[AgentRole::ReqEng];
  if (cfg_.backend == BackendKind::Stub) return stub_req_eng_vote(ctx, cfg_.stub);
  return http_vote_or_fallback(AgentRole::ReqEng, ctx, nullptr, nullptr);
}

AgentVote AgentSystem::fail_mgr(const AgentContext& ctx) {
  ++calls_[AgentRole::FailMgr];
  if (cfg_.backend == BackendKind::Stub) return stub_fail_mgr_vote(ctx, cfg_.stub);
  return http_vote_or_fallback(AgentRole::FailMgr, ctx, nullptr, nullptr);
}

AgentVote AgentSystem::sys_eng(const AgentContext& ctx, const AgentVote& re_vote,
                               const AgentVote& fm_vote) {
  ++calls_[AgentRole::SysEng];
  AgentVote v = cfg_.backend == BackendKind::Stub
                    ? stub_sys_eng_vote(ctx, re_vote, fm_vote, cfg_.stub)
                    : http_vote_or_fallback(AgentRole::SysEng, ctx, &re_vote, &fm_vote);
  // A gain proposal is emitted exactly when a peer voted FAIL, no matter what
  // the backend produced.
  const bool re_failed = re_vote.vote == Vote::FAIL;
  const bool fm_failed = fm_vote.vote == Vote::FAIL;
  if (!re_failed && !fm_failed) {
    v.tuning_proposal.reset();
    v.tuning_reasoning.clear();
  } else {
    FrameStats stats;
    if (ctx.frame_values.size() >= 3) {
      stats = analyze_against_centers(
          ctx.frame_values, deviation_centers(ctx.frame_values, ctx.setpoint_frame),
          cfg_.stub.diverging_slope);
    }
    if (!v.tuning_proposal) {
      v.tuning_proposal = make_gain_proposal(ctx, re_failed, fm_failed, stats, cfg_.stub);
      if (v.tuning_reasoning.empty()) v.tuning_reasoning = v.tuning_proposal->tuning_reasoning;
    }
    v.tuning_proposal->sample_id = ctx.sample_id;
    v.tuning_proposal->triggered_by.clear();
    if (fm_failed) v.tuning_proposal->triggered_by.push_back(AgentRole::FailMgr);
    if (re_failed) v.tuning_proposal->triggered_by.push_back(AgentRole::ReqEng);
    v.tuning_proposal->validate();
  }
  return v;
}

TuningAction AgentSystem::inspector(const AgentContext& ctx,
                                    const std::array<AgentVote, 3>& votes) {
  ++calls_[AgentRole::Inspector];
  TuningAction action;
  bool from_backend = false;
  if (cfg_.backend == BackendKind::Http) {
    std::string err;
    const auto payload = cfg_.http->complete_json(
        AgentRole::Inspector, ctx.sample_id, render_system_prompt(AgentRole::Inspector),
        render_inspector_user_prompt(ctx, votes), &err);
    if (payload) {
      try {
        action = parse_tuning_action(*payload);
        from_backend = true;
      } catch (const std::exception&) {
        // fall through to the stub
      }
    }
    if (!from_backend) ++degraded_calls_;
  }
  if (!from_backend) action = stub_inspector_decide(ctx, votes, cfg_.stub);
  // The vote tally is ground truth from the council, not something a backend
  // may reinterpret.
  int pass = 0;
  for (const AgentVote& v : votes) {
    if (v.vote == Vote::PASS) ++pass;
  }
  action.pass_votes = pass;
  action.fail_votes = 3 - pass;
  action.majority_decision = pass >= 2 ? Vote::PASS : Vote::FAIL;
  action.validate();
  return action;
}

TunerAdvice AgentSystem::tuner_advice(const Engine& candidate, double error) {
  ++calls_[AgentRole::Tuner];
  return advice_impl(candidate, error);
}

TunerAdvice AgentSystem::advice_impl(const Engine& candidate, double error) {
  if (cfg_.backend == BackendKind::Http) {
    std::vector<std::pair<double, double>> grid;
    grid.reserve(10);
    for (int i = 1; i <= 10; ++i) {
      const double alpha = static_cast<double>(i) / 100.0;
      grid.emplace_back(alpha, candidate.bound_for_alpha(alpha));
    }
    std::string err;
    const auto payload = cfg_.http->complete_json(
        AgentRole::Tuner, 0, render_system_prompt(AgentRole::Tuner),
        render_tuner_user_prompt(error, grid), &err);
    if (payload) {
      try {
        TunerAdvice adv = parse_tuner_advice(*payload);
        adv.would_pass_at_recommended =
            error <= candidate.bound_for_alpha(adv.recommended_alpha);
        return adv;
      } catch (const std::exception&) {
        // fall through to the stub
      }
    }
    ++degraded_calls_;
  }
  return stub_tuner_advice(candidate, error);
}

CandidateState AgentSystem::apply_tuning(const TuningAction& action, Engine& candidate,
                                         const AgentContext& ctx,
                                         const std::vector<WindowPair>& recent_pairs,
                                         TunerAdvice* advice_out) {
  ++calls_[AgentRole::Tuner];
  return tuner_apply(
      action, candidate, ctx, recent_pairs,
      [this](const Engine& cand, double err) { return advice_impl(cand, err); },
      advice_out);
}

}  // namespace aivv
