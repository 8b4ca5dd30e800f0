#include "aivv/sentry.hpp"

#include <cmath>
#include <stdexcept>

namespace aivv {

std::string to_string(GateDecision d) {
  return d == GateDecision::PASS ? "PASS" : "FAIL";
}

namespace sentry {

SentryDecision decide_from_residual(double residual, double bound, double uncertainty,
                                    double prediction, int sample_id) {
  if (residual < 0.0) throw std::invalid_argument("sentry: residual must be >= 0");
  if (!std::isfinite(bound) || bound < 0.0)
    throw std::invalid_argument("sentry: bound must be finite and >= 0");
  SentryDecision d;
  d.sample_id = sample_id;
  d.residual = residual;
  d.bound = bound;
  d.uncertainty = uncertainty;
  d.prediction = prediction;
  d.decision = residual > bound ? GateDecision::FAIL : GateDecision::PASS;
  return d;
}

SentryDecision evaluate(const Engine& engine, std::span<const double> x_t, double y_t,
                        int sample_id, Rng& mask_rng) {
  if (!engine.calibrated())
    throw std::runtime_error("sentry: engine is not calibrated");
  const Prediction p = engine.mc_predict(x_t, mask_rng);
  return decide_from_residual(std::abs(p.mean - y_t), engine.conformal_bound(), p.std,
                              p.mean, sample_id);
}

SentryDecision reevaluate_candidate(const Engine& candidate, std::span<const double> x_t,
                                    double y_t, int sample_id, Rng& mask_rng) {
  return evaluate(candidate, x_t, y_t, sample_id, mask_rng);
}

}  // namespace sentry

}  // namespace aivv
