#include "aivv/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <utility>

namespace aivv {
namespace {

std::string hash_hex(std::uint64_t h) {
  char buf[19];
  std::snprintf(buf, sizeof(buf), "0x%016llx", static_cast<unsigned long long>(h));
  return buf;
}

nlohmann::json vote_detail(const AgentVote& v) {
  nlohmann::json j{{"agent", to_string(v.agent)},
                   {"vote", to_string(v.vote)},
                   {"confidence", v.confidence},
                   {"reasoning", v.reasoning}};
  j["risk_level"] = v.risk_level == RiskLevel::None
                        ? nlohmann::json()
                        : nlohmann::json(to_string(v.risk_level));
  return j;
}

}  // namespace

std::string to_string(PipelineMode m) {
  switch (m) {
    case PipelineMode::MathOnly: return "math_only";
    case PipelineMode::MathPlusCouncil: return "math_plus_council";
    case PipelineMode::FullAIVV: return "full_aivv";
  }
  throw std::invalid_argument("unknown pipeline mode");
}

PipelineMode pipeline_mode_from_string(const std::string& s) {
  if (s == "math_only") return PipelineMode::MathOnly;
  if (s == "math_plus_council") return PipelineMode::MathPlusCouncil;
  if (s == "full_aivv") return PipelineMode::FullAIVV;
  throw std::invalid_argument("unknown pipeline mode: " + s);
}

void PipelineConfig::validate() const {
  if (k_max != 2)
    throw std::invalid_argument("pipeline: k_max is fixed at 2");
  if (fine_tune_window <= 0)
    throw std::invalid_argument("pipeline: fine_tune_window must be positive");
  if (breach_window <= 0)
    throw std::invalid_argument("pipeline: breach_window must be positive");
  if (max_failure_effect < 0.0 || !std::isfinite(max_failure_effect))
    throw std::invalid_argument("pipeline: max_failure_effect must be finite and >= 0");
  if (horizon_h < 1)
    throw std::invalid_argument("pipeline: horizon_h must be >= 1");
  if (!(split_ratio > 0.0 && split_ratio < 1.0))
    throw std::invalid_argument("pipeline: split_ratio must lie in (0, 1)");
}

void to_json(nlohmann::json& j, const CouncilRound& r) {
  nlohmann::json votes = nlohmann::json::array();
  for (const auto& v : r.votes) votes.push_back(v);
  j = nlohmann::json{{"loop", r.loop},
                     {"votes", std::move(votes)},
                     {"majority", to_string(r.majority)}};
}

Vote majority_vote(const std::array<AgentVote, 3>& votes) {
  int fails = 0;
  for (const auto& v : votes)
    if (v.vote == Vote::FAIL) ++fails;
  return fails >= 2 ? Vote::FAIL : Vote::PASS;
}

Vote majority_vote(const std::vector<AgentVote>& votes) {
  if (votes.size() != 3)
    throw std::invalid_argument("majority_vote: expected exactly 3 votes, got " +
                                std::to_string(votes.size()));
  return majority_vote(std::array<AgentVote, 3>{votes[0], votes[1], votes[2]});
}

void SampleRecord::validate() const {
  if (promoted) {
    if (!candidate || !candidate->passes_reevaluation)
      throw std::logic_error("sample record: promotion without a passing candidate");
    if (!sentry_recheck || *sentry_recheck != GateDecision::PASS)
      throw std::logic_error("sample record: promotion without a PASS re-check");
    if (final_label != Vote::PASS)
      throw std::logic_error("sample record: promotion must resolve the sample as PASS");
  } else if (param_hash_after != param_hash_before) {
    throw std::logic_error("sample record: deployed parameters changed without promotion");
  }
  if (candidate.has_value() && !action.has_value())
    throw std::logic_error("sample record: candidate state without a tuning action");
  if (candidate.has_value() != sentry_recheck.has_value())
    throw std::logic_error("sample record: re-check and candidate state must appear together");
  for (std::size_t i = 0; i < councils.size(); ++i)
    if (councils[i].loop != static_cast<int>(i) + 1)
      throw std::logic_error("sample record: council rounds must be numbered 1..k in order");
}

void to_json(nlohmann::json& j, const SampleRecord& r) {
  j = nlohmann::json{{"sample_id", r.sample_id},
                     {"truth_positive", r.truth_positive},
                     {"prediction", r.prediction},
                     {"residual", r.residual},
                     {"bound", r.bound},
                     {"uncertainty", r.uncertainty},
                     {"true_value", r.true_value},
                     {"sentry_initial", to_string(r.sentry_initial)},
                     {"promoted", r.promoted},
                     {"degraded", r.degraded},
                     {"final_label", to_string(r.final_label)},
                     {"param_hash_before", hash_hex(r.param_hash_before)},
                     {"param_hash_after", hash_hex(r.param_hash_after)}};
  j["sentry_recheck"] = r.sentry_recheck ? nlohmann::json(to_string(*r.sentry_recheck))
                                         : nlohmann::json();
  j["councils"] = r.councils;
  j["action"] = r.action ? nlohmann::json(*r.action) : nlohmann::json();
  j["candidate"] = r.candidate ? nlohmann::json(*r.candidate) : nlohmann::json();
}

void to_json(nlohmann::json& j, const RunMetrics& m) {
  j = nlohmann::json{{"tp", m.tp},
                     {"tn", m.tn},
                     {"fp", m.fp},
                     {"fn", m.fn},
                     {"n_samples", m.n_samples()},
                     {"accuracy", m.accuracy},
                     {"agent_calls", m.agent_calls},
                     {"total_agent_calls", m.total_agent_calls},
                     {"adaptation_invocations", m.adaptation_invocations},
                     {"promotions", m.promotions},
                     {"degraded_agent_calls", m.degraded_agent_calls},
                     {"degraded_samples", m.degraded_samples},
                     {"seed_success", m.seed_success}};
}

void from_json(const nlohmann::json& j, RunMetrics& m) {
  j.at("tp").get_to(m.tp);
  j.at("tn").get_to(m.tn);
  j.at("fp").get_to(m.fp);
  j.at("fn").get_to(m.fn);
  j.at("accuracy").get_to(m.accuracy);
  j.at("agent_calls").get_to(m.agent_calls);
  j.at("total_agent_calls").get_to(m.total_agent_calls);
  j.at("adaptation_invocations").get_to(m.adaptation_invocations);
  j.at("promotions").get_to(m.promotions);
  j.at("degraded_agent_calls").get_to(m.degraded_agent_calls);
  j.at("degraded_samples").get_to(m.degraded_samples);
  j.at("seed_success").get_to(m.seed_success);
}

Pipeline::Pipeline(Engine engine, const TelemetryDataset& dataset, int baseline_end,
                   PipelineConfig cfg, EventLog* log)
    : engine_(std::move(engine)),
      data_(&dataset),
      cfg_(std::move(cfg)),
      agents_(cfg_.agents),
      log_(log),
      mask_rng_(0) {
  cfg_.validate();
  if (!engine_.calibrated())
    throw std::invalid_argument("pipeline: engine must be calibrated before streaming");
  if (baseline_end < 0 || baseline_end > static_cast<int>(dataset.yaw.size()))
    throw std::invalid_argument("pipeline: baseline_end outside the dataset");
  if (dataset.setpoint.size() != dataset.yaw.size())
    throw std::invalid_argument("pipeline: dataset setpoint/yaw length mismatch");

  const std::string key = "gate-mask:" + std::to_string(cfg_.seed);
  mask_rng_ = Rng(fnv1a64(key.data(), key.size()));

  std::vector<double> deviation(static_cast<std::size_t>(baseline_end));
  for (int i = 0; i < baseline_end; ++i)
    deviation[static_cast<std::size_t>(i)] = dataset.yaw[i] - dataset.setpoint[i];
  baseline_ = summarize_baseline(deviation);
  failure_effect_limit_ = cfg_.max_failure_effect > 0.0 ? cfg_.max_failure_effect
                                                        : 2.0 * baseline_.peak;
}

AgentContext Pipeline::make_context(const SentryDecision& gate,
                                    const WindowPair& pair, int loop) const {
  const int w = static_cast<int>(pair.input.size());
  const int start = pair.raw_index - w - cfg_.horizon_h + 1;
  if (start < 0 || pair.raw_index >= static_cast<int>(data_->yaw.size()))
    throw std::out_of_range("pipeline: window does not fit inside the dataset");
  if (static_cast<int>(data_->setpoint.size()) <= pair.raw_index)
    throw std::out_of_range("pipeline: setpoint series does not cover the frame");

  AgentContext ctx;
  ctx.sample_id = pair.raw_index;
  ctx.residual = gate.residual;
  ctx.bound = gate.bound;
  ctx.uncertainty = gate.uncertainty;
  ctx.prediction = gate.prediction;
  ctx.true_value = pair.target;
  // The deliberation frame runs through the sample under judgment: the council
  // must see where the vehicle is NOW, not where it was when the model's input
  // window closed, or a recovery is indistinguishable from an ongoing fault.
  const int n_frame = pair.raw_index - start + 1;
  ctx.frame_values.assign(data_->yaw.begin() + start,
                          data_->yaw.begin() + start + n_frame);
  ctx.setpoint_frame.assign(data_->setpoint.begin() + start,
                            data_->setpoint.begin() + start + n_frame);
  ctx.input_window = pair.input;
  ctx.frame_baseline_summary = baseline_;
  ctx.current_gains = data_->config.pid;
  ctx.reference_max_velocity = data_->config.ref_filter.max_velocity;
  ctx.max_failure_effect = failure_effect_limit_;
  ctx.tau = engine_.uncertainty_threshold();
  ctx.alpha = engine_.alpha();
  ctx.recent_breach_count = static_cast<int>(
      std::count(breach_history_.begin(), breach_history_.end(), true));
  ctx.loop = loop;
  ctx.validate();
  return ctx;
}

void Pipeline::log_council(const CouncilRound& round, int sample_id) {
  if (!log_) return;
  nlohmann::json votes = nlohmann::json::array();
  for (const auto& v : round.votes) votes.push_back(v);
  log_->append(Envelope{"", sample_id, "council", "inspector",
                        nlohmann::json{{"loop", round.loop}, {"votes", std::move(votes)}}});
}

void Pipeline::log_action(const TuningAction& action, const CouncilRound& round,
                          int sample_id) {
  if (!log_) return;
  nlohmann::json payload = action;
  nlohmann::json details = nlohmann::json::array();
  for (const auto& v : round.votes) details.push_back(vote_detail(v));
  payload["vote_details"] = std::move(details);
  log_->append(Envelope{"", sample_id, "inspector", "tuner", std::move(payload)});
}

void Pipeline::log_candidate(const CandidateState& state, int sample_id) {
  if (!log_) return;
  log_->append(Envelope{"", sample_id, "tuner", "sentry", nlohmann::json(state)});
}

Vote Pipeline::escalate(const SentryDecision& gate, const WindowPair& pair,
                        SampleRecord& rec) {
  for (int k = 1; k <= cfg_.k_max; ++k) {
    const AgentContext ctx = make_context(gate, pair, k);
    CouncilRound round;
    round.loop = k;
    round.votes[0] = agents_.req_eng(ctx);
    round.votes[1] = agents_.fail_mgr(ctx);
    round.votes[2] = agents_.sys_eng(ctx, round.votes[0], round.votes[1]);
    round.majority = majority_vote(round.votes);
    rec.councils.push_back(round);
    log_council(round, rec.sample_id);

    if (round.majority == Vote::FAIL) return Vote::FAIL;
    if (cfg_.mode == PipelineMode::MathPlusCouncil) return Vote::PASS;
    if (k == cfg_.k_max) return Vote::PASS;

    ++adaptations_;
    const TuningAction action = agents_.inspector(ctx, round.votes);
    rec.action = action;
    log_action(action, round, rec.sample_id);

    Engine candidate = engine_.clone();
    const std::vector<WindowPair> recent(observed_.begin(), observed_.end());
    const CandidateState state = agents_.apply_tuning(action, candidate, ctx, recent);
    rec.candidate = state;
    rec.sentry_recheck =
        state.passes_reevaluation ? GateDecision::PASS : GateDecision::FAIL;
    log_candidate(state, rec.sample_id);

    if (state.passes_reevaluation) {
      engine_ = std::move(candidate);
      rec.promoted = true;
      ++promotions_;
      return Vote::PASS;
    }
    // The candidate is discarded and the council deliberates once more.
  }
  return Vote::PASS;
}

SampleRecord Pipeline::process_sample(const WindowPair& pair) {
  SampleRecord rec;
  rec.sample_id = pair.raw_index;
  rec.truth_positive = pair.raw_index >= 0 &&
                       pair.raw_index < static_cast<int>(data_->fault_mask.size()) &&
                       data_->fault_mask[pair.raw_index] != 0;
  rec.param_hash_before = engine_.param_hash();

  const SentryDecision gate =
      sentry::evaluate(engine_, pair.input, pair.target, pair.raw_index, mask_rng_);
  rec.prediction = gate.prediction;
  rec.residual = gate.residual;
  rec.bound = gate.bound;
  rec.uncertainty = gate.uncertainty;
  rec.true_value = pair.target;
  rec.sentry_initial = gate.decision;

  breach_history_.push_back(gate.decision == GateDecision::FAIL);
  while (static_cast<int>(breach_history_.size()) > cfg_.breach_window)
    breach_history_.pop_front();

  Vote final = gate.decision == GateDecision::FAIL ? Vote::FAIL : Vote::PASS;
  if (gate.decision == GateDecision::FAIL && cfg_.mode != PipelineMode::MathOnly) {
    try {
      final = escalate(gate, pair, rec);
    } catch (const std::exception&) {
      // Fail-safe: a degraded escalation never overturns the gate.
      rec.degraded = true;
      final = Vote::FAIL;
    }
  }
  rec.final_label = final;

  // Only samples the Sentry itself accepted feed later fine-tunes: adaptation
  // closes the gap to the accepted regime, never to the data it challenged.
  // Otherwise a slowly growing fault teaches the candidate its own divergence
  // and gets promoted past the re-check.
  if (gate.decision == GateDecision::PASS) {
    observed_.push_back(pair);
    while (static_cast<int>(observed_.size()) > cfg_.fine_tune_window)
      observed_.pop_front();
  }

  rec.param_hash_after = engine_.param_hash();
  rec.validate();
  return rec;
}

RunResult Pipeline::run_stream(const std::vector<WindowPair>& test_pairs) {
  const int calls_before = agents_.total_calls();
  const int degraded_before = agents_.degraded_calls();
  std::map<AgentRole, int> role_before;
  for (AgentRole role : {AgentRole::ReqEng, AgentRole::FailMgr, AgentRole::SysEng,
                         AgentRole::Inspector, AgentRole::Tuner})
    role_before[role] = agents_.calls(role);
  const int adaptations_before = adaptations_;
  const int promotions_before = promotions_;

  RunResult out;
  out.records.reserve(test_pairs.size());
  for (const auto& pair : test_pairs) out.records.push_back(process_sample(pair));

  RunMetrics& m = out.metrics;
  for (const auto& rec : out.records) {
    const bool fail = rec.final_label == Vote::FAIL;
    if (rec.truth_positive)
      fail ? ++m.tp : ++m.fn;
    else
      fail ? ++m.fp : ++m.tn;
    if (rec.degraded) ++m.degraded_samples;
  }
  m.accuracy = out.records.empty()
                   ? 0.0
                   : static_cast<double>(m.tp + m.tn) / static_cast<double>(m.n_samples());
  for (const auto& [role, before] : role_before)
    m.agent_calls[to_string(role)] = agents_.calls(role) - before;
  m.total_agent_calls = agents_.total_calls() - calls_before;
  m.adaptation_invocations = adaptations_ - adaptations_before;
  m.promotions = promotions_ - promotions_before;
  m.degraded_agent_calls = agents_.degraded_calls() - degraded_before;
  m.seed_success = m.tp >= 1 && m.fp == 0;
  return out;
}

ScenarioSpec dataset_recipe(int index) {
  ScenarioSpec spec;
  switch (index) {
    case 1:
      spec.sim.scenario = Scenario::Hovering;
      spec.fault = FaultSpec{FaultKind::ElectricalSpike, 1200, 75.0, 30};
      break;
    case 2:
      spec.sim.scenario = Scenario::Lawnmower;
      spec.fault = FaultSpec{FaultKind::ElectricalSpike, 1200, 75.0, 30};
      break;
    case 3:
      spec.sim.scenario = Scenario::Complex;
      spec.fault = FaultSpec{FaultKind::MechanicalDamper, 1200, 0.8, 0};
      break;
    default:
      throw std::out_of_range("dataset_recipe: index must be 1, 2, or 3");
  }
  spec.fault->validate(spec.sim.n_steps);
  return spec;
}

void to_json(nlohmann::json& j, const SeedRunOutcome& o) {
  j = nlohmann::json{{"seed", o.seed},
                     {"metrics", o.metrics},
                     {"math_only", o.math_only}};
}

void to_json(nlohmann::json& j, const AggregateMetrics& m) {
  j = nlohmann::json{{"seeds_total", m.seeds_total},
                     {"seeds_successful", m.seeds_successful},
                     {"fvr_percent", m.fvr_percent},
                     {"mean_accuracy_initial", m.mean_accuracy_initial},
                     {"mean_accuracy_final", m.mean_accuracy_final},
                     {"per_seed", m.per_seed}};
}

std::pair<std::vector<WindowPair>, std::vector<WindowPair>> split_fit_cal(
    const std::vector<WindowPair>& train_pairs, double cal_ratio) {
  const int n = static_cast<int>(train_pairs.size());
  if (n < 2)
    throw std::invalid_argument("split_fit_cal: need at least 2 training pairs");
  if (!(cal_ratio > 0.0 && cal_ratio < 1.0))
    throw std::invalid_argument("split_fit_cal: cal_ratio must lie in (0, 1)");
  int n_cal = static_cast<int>(std::llround(cal_ratio * n));
  n_cal = std::clamp(n_cal, 1, n - 1);
  return {std::vector<WindowPair>(train_pairs.begin(), train_pairs.end() - n_cal),
          std::vector<WindowPair>(train_pairs.end() - n_cal, train_pairs.end())};
}

SeedRunOutcome run_seed(const ScenarioSpec& scenario, const EngineConfig& engine_cfg,
                        const PipelineConfig& pipe_cfg, std::uint64_t seed,
                        EventLog* log) {
  SimConfig sim = scenario.sim;
  sim.seed = seed;
  const TelemetryDataset dataset = simulate(sim, scenario.noise, scenario.fault);
  const WindowSplit split = make_windows(dataset, engine_cfg.window_w,
                                         pipe_cfg.horizon_h, pipe_cfg.split_ratio);

  Engine engine(engine_cfg, seed);
  const auto [fit, cal] = split_fit_cal(split.train, engine_cfg.cal_ratio);
  engine.train(fit, engine_cfg.optimizer.epochs, engine_cfg.optimizer.lr);
  engine.calibrate(cal, engine_cfg.alpha);

  PipelineConfig pc = pipe_cfg;
  pc.seed = seed;

  SeedRunOutcome out;
  out.seed = seed;

  PipelineConfig base_cfg = pc;
  base_cfg.mode = PipelineMode::MathOnly;
  Pipeline base(engine.clone(), dataset, split.split_index, base_cfg);
  out.math_only = base.run_stream(split.test).metrics;

  if (pc.mode == PipelineMode::MathOnly) {
    out.metrics = out.math_only;
  } else {
    Pipeline main(std::move(engine), dataset, split.split_index, pc, log);
    out.metrics = main.run_stream(split.test).metrics;
  }
  return out;
}

AggregateMetrics run_seeds(const ScenarioSpec& scenario, const EngineConfig& engine_cfg,
                           const PipelineConfig& pipe_cfg,
                           const std::vector<std::uint64_t>& seeds) {
  AggregateMetrics agg;
  agg.seeds_total = static_cast<int>(seeds.size());
  agg.per_seed.reserve(seeds.size());
  for (std::uint64_t seed : seeds)
    agg.per_seed.push_back(run_seed(scenario, engine_cfg, pipe_cfg, seed));

  double acc_initial = 0.0;
  double acc_final = 0.0;
  for (const auto& o : agg.per_seed) {
    if (o.metrics.seed_success) ++agg.seeds_successful;
    acc_initial += o.math_only.accuracy;
    acc_final += o.metrics.accuracy;
  }
  if (!agg.per_seed.empty()) {
    agg.fvr_percent = 100.0 * agg.seeds_successful / agg.seeds_total;
    agg.mean_accuracy_initial = acc_initial / agg.seeds_total;
    agg.mean_accuracy_final = acc_final / agg.seeds_total;
  }
  return agg;
}

}  // namespace aivv
