#pragma once

#include <span>
#include <string>

#include "aivv/engine.hpp"
#include "aivv/rng.hpp"

namespace aivv {

enum class GateDecision { PASS, FAIL };

std::string to_string(GateDecision d);

// Deterministic hard gate: FAIL iff e_t > C_alpha (strict; ties PASS).
struct SentryDecision {
  int sample_id = 0;
  double residual = 0.0;    // e_t = |mu_t - y_t|
  double bound = 0.0;       // C_alpha at evaluation time
  double uncertainty = 0.0; // sigma_t, advisory context only (never gates)
  double prediction = 0.0;  // mu_t, carried for logging and candidate state
  GateDecision decision = GateDecision::PASS;
};

namespace sentry {

// The bare decision rule, shared by every evaluation path.
SentryDecision decide_from_residual(double residual, double bound, double uncertainty,
                                    double prediction, int sample_id);

// Evaluates one sample against the engine's live bound. Pure with respect to
// the engine: dropout masks come from the caller-owned rng.
SentryDecision evaluate(const Engine& engine, std::span<const double> x_t, double y_t,
                        int sample_id, Rng& mask_rng);

// Same rule run against a cloned candidate's own bound; result feeds the
// promote/discard branch.
SentryDecision reevaluate_candidate(const Engine& candidate, std::span<const double> x_t,
                                    double y_t, int sample_id, Rng& mask_rng);

}  // namespace sentry

}  // namespace aivv
