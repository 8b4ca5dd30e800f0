#include "aivv/sim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "aivv/rng.hpp"

namespace aivv {

std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::Hovering: return "hovering";
    case Scenario::Lawnmower: return "lawnmower";
    case Scenario::Complex: return "complex";
  }
  throw std::invalid_argument("unknown Scenario value");
}

std::string to_string(NoiseFamily f) {
  switch (f) {
    case NoiseFamily::Laplace: return "laplace";
    case NoiseFamily::StudentT: return "student_t";
  }
  throw std::invalid_argument("unknown NoiseFamily value");
}

std::string to_string(FaultKind k) {
  switch (k) {
    case FaultKind::ElectricalSpike: return "electrical_spike";
    case FaultKind::MechanicalDamper: return "mechanical_damper";
  }
  throw std::invalid_argument("unknown FaultKind value");
}

Scenario scenario_from_string(const std::string& s) {
  if (s == "hovering" || s == "hover") return Scenario::Hovering;
  if (s == "lawnmower") return Scenario::Lawnmower;
  if (s == "complex") return Scenario::Complex;
  throw std::invalid_argument("unknown scenario: " + s);
}

NoiseFamily noise_family_from_string(const std::string& s) {
  if (s == "laplace") return NoiseFamily::Laplace;
  if (s == "student_t") return NoiseFamily::StudentT;
  throw std::invalid_argument("unknown noise family: " + s);
}

FaultKind fault_kind_from_string(const std::string& s) {
  if (s == "electrical_spike" || s == "spike") return FaultKind::ElectricalSpike;
  if (s == "mechanical_damper" || s == "damper") return FaultKind::MechanicalDamper;
  throw std::invalid_argument("unknown fault kind: " + s);
}

void SimConfig::validate() const {
  if (!(dt > 0.0)) throw std::invalid_argument("SimConfig.dt must be > 0");
  if (n_steps < 1) throw std::invalid_argument("SimConfig.n_steps must be >= 1");
  if (!(nomoto_time_constant > 0.0))
    throw std::invalid_argument("SimConfig.nomoto_time_constant must be > 0");
  if (!(pid.kp > 0.0)) throw std::invalid_argument("SimConfig.pid.kp must be > 0");
  if (!(pid.ti > 0.0)) throw std::invalid_argument("SimConfig.pid.ti must be > 0");
  if (pid.td < 0.0) throw std::invalid_argument("SimConfig.pid.td must be >= 0");
  if (!(ref_filter.max_velocity > 0.0))
    throw std::invalid_argument("SimConfig.ref_filter.max_velocity must be > 0");
  if (!(ref_filter.damping_ratio > 0.0))
    throw std::invalid_argument("SimConfig.ref_filter.damping_ratio must be > 0");
  if (!(ref_filter.natural_frequency > 0.0))
    throw std::invalid_argument("SimConfig.ref_filter.natural_frequency must be > 0");
  if (!(rudder_limit > 0.0))
    throw std::invalid_argument("SimConfig.rudder_limit must be > 0");
}

void NoiseSpec::validate() const {
  if (scale < 0.0) throw std::invalid_argument("NoiseSpec.scale must be >= 0");
  if (drift_start < 0) throw std::invalid_argument("NoiseSpec.drift_start must be >= 0");
}

void FaultSpec::validate(int n_steps) const {
  if (onset < 0 || onset >= n_steps)
    throw std::invalid_argument("FaultSpec.onset must lie in [0, n_steps)");
  if (kind == FaultKind::ElectricalSpike) {
    if (duration < 1) throw std::invalid_argument("FaultSpec.duration must be >= 1");
  } else {
    if (magnitude < 0.0 || magnitude > 1.0)
      throw std::invalid_argument("FaultSpec.magnitude (damping loss) must lie in [0,1]");
  }
}

namespace {

struct Segment {
  int begin;
  int end;  // exclusive; INT_MAX-ish sentinel handled by caller
  double level;
};

// Fixed deterministic maneuver schedules, degrees. Indices are absolute steps
// so the same scenario truncates or extends cleanly with n_steps.
double hovering_setpoint(int t) {
  if (t >= 350 && t < 500) return 2.0;
  if (t >= 700 && t < 850) return -2.0;
  if (t >= 1050 && t < 1150) return 1.5;
  return 0.0;
}

double lawnmower_setpoint(int t) {
  // Survey legs of 350 steps (7 s) alternating heading.
  const int leg = t / 350;
  return (leg % 2 == 0) ? 25.0 : -25.0;
}

double complex_setpoint(int t) {
  static constexpr Segment kPlan[] = {
      {0, 150, 0.0},     {150, 320, 20.0},  {320, 430, -12.0},
      {430, 640, 30.0},  {640, 780, 5.0},   {780, 950, -25.0},
      {950, 1080, 15.0}, {1080, 1250, -5.0}, {1250, 1 << 30, 25.0},
  };
  for (const auto& seg : kPlan) {
    if (t >= seg.begin && t < seg.end) return seg.level;
  }
  return 0.0;
}

}  // namespace

std::vector<double> generate_reference(Scenario scenario, int n_steps, double dt) {
  if (n_steps < 1) throw std::invalid_argument("generate_reference: n_steps must be >= 1");
  if (!(dt > 0.0)) throw std::invalid_argument("generate_reference: dt must be > 0");
  std::vector<double> out(static_cast<std::size_t>(n_steps));
  for (int t = 0; t < n_steps; ++t) {
    switch (scenario) {
      case Scenario::Hovering: out[t] = hovering_setpoint(t); break;
      case Scenario::Lawnmower: out[t] = lawnmower_setpoint(t); break;
      case Scenario::Complex: out[t] = complex_setpoint(t); break;
      default: throw std::invalid_argument("generate_reference: unknown scenario");
    }
  }
  return out;
}

TelemetryDataset simulate(const SimConfig& config, const NoiseSpec& noise,
                          const std::optional<FaultSpec>& fault) {
  config.validate();
  noise.validate();
  if (fault) fault->validate(config.n_steps);

  const int n = config.n_steps;
  const double dt = config.dt;
  const auto setpoint = generate_reference(config.scenario, n, dt);

  TelemetryDataset ds;
  ds.yaw.resize(n);
  ds.setpoint = setpoint;
  ds.fault_mask.assign(n, 0);
  ds.scenario = config.scenario;
  ds.seed = config.seed;
  ds.config = config;
  ds.noise = noise;
  ds.fault = fault;

  Rng rng(config.seed);

  // Plant state (true yaw psi and yaw rate r), reference shaper, PID state.
  double psi = 0.0, r = 0.0;
  double s1 = setpoint[0], s2 = setpoint[0], s2d = 0.0;
  double integ = 0.0, prev_err = 0.0, dfilt = 0.0;
  double drift = 0.0;

  const double wn = config.ref_filter.natural_frequency;
  const double zeta = config.ref_filter.damping_ratio;
  const double vmax = config.ref_filter.max_velocity;
  const double kp = config.pid.kp, ti = config.pid.ti, td = config.pid.td;
  // Derivative term low-passed with tau = Td/10 (filter coefficient N = 10).
  const double tau_f = td > 0.0 ? td / 10.0 : 0.0;

  for (int t = 0; t < n; ++t) {
    // Third-order reference shaping: rate-limited first-order tracker cascaded
    // with a second-order stage.
    const double rate = std::clamp(wn * (setpoint[t] - s1), -vmax, vmax);
    s1 += rate * dt;
    const double s2dd = wn * wn * (s1 - s2) - 2.0 * zeta * wn * s2d;
    s2 += s2d * dt;
    s2d += s2dd * dt;

    // Measurement: true yaw + cumulative drift + heavy-tailed noise (+ spike).
    if (t >= noise.drift_start) drift += noise.drift_rate;
    const double eps = noise.family == NoiseFamily::Laplace
                           ? rng.laplace(noise.scale)
                           : noise.scale * rng.student_t(3);
    const bool spike_active = fault && fault->kind == FaultKind::ElectricalSpike &&
                              t >= fault->onset && t < fault->onset + fault->duration;
    const bool damper_active = fault && fault->kind == FaultKind::MechanicalDamper &&
                               t >= fault->onset;
    double meas = psi + drift + eps;
    if (spike_active) meas += fault->magnitude;

    // PID with derivative low-pass, rudder saturation and conditional
    // integration as anti-windup.
    const double err = s2 - meas;
    if (t > 0 && td > 0.0) {
      const double d_raw = (err - prev_err) / dt;
      dfilt += dt / (tau_f + dt) * (d_raw - dfilt);
    }
    prev_err = err;
    const double u = kp * (err + integ / ti + td * dfilt);
    const double delta = std::clamp(u, -config.rudder_limit, config.rudder_limit);
    const bool saturated = u != delta;
    if (!saturated || err * u < 0.0) integ += err * dt;

    // Damper fault: loss of effective damping plus an actuator hardover jam at
    // full deflection, which makes the heading diverge monotonically.
    double damping = 1.0;
    double delta_eff = delta;
    if (damper_active) {
      damping = 1.0 - fault->magnitude;
      delta_eff = -config.rudder_limit;
    }

    // Nomoto first-order yaw dynamics, explicit Euler.
    const double rdot = (config.nomoto_gain * delta_eff - damping * r) /
                        config.nomoto_time_constant;
    psi += r * dt;
    r += rdot * dt;
    if (!std::isfinite(psi) || !std::isfinite(r))
      throw std::runtime_error("simulate: non-finite state at step " + std::to_string(t));

    ds.yaw[t] = meas;
    ds.fault_mask[t] = (spike_active || damper_active) ? 1 : 0;
  }
  return ds;
}

std::vector<WindowPair> window_series(const std::vector<double>& series, int begin,
                                      int end, int w, int h) {
  if (w < 1 || h < 1) throw std::invalid_argument("window_series: w and h must be >= 1");
  if (begin < 0 || end > static_cast<int>(series.size()) || begin > end)
    throw std::invalid_argument("window_series: bad range");
  const int len = end - begin;
  std::vector<WindowPair> pairs;
  if (len < w + h) return pairs;
  pairs.reserve(static_cast<std::size_t>(len - w - h + 1));
  for (int i = begin; i + w + h <= end; ++i) {
    WindowPair p;
    p.input.assign(series.begin() + i, series.begin() + i + w);
    p.raw_index = i + w + h - 1;
    p.target = series[p.raw_index];
    pairs.push_back(std::move(p));
  }
  return pairs;
}

WindowSplit make_windows(const TelemetryDataset& dataset, int w, int h,
                         double split_ratio) {
  if (!(split_ratio > 0.0) || split_ratio > 1.0)
    throw std::invalid_argument("make_windows: split_ratio must lie in (0, 1]");
  const int n = static_cast<int>(dataset.yaw.size());
  const int n_train = static_cast<int>(std::llround(split_ratio * n));
  const int n_test = n - n_train;
  if (n_train < w + h)
    throw std::invalid_argument("make_windows: train split shorter than W+H");
  if (n_test > 0 && n_test < w + h)
    throw std::invalid_argument("make_windows: test split shorter than W+H");

  WindowSplit out;
  out.split_index = n_train;
  out.train = window_series(dataset.yaw, 0, n_train, w, h);
  out.test = window_series(dataset.yaw, n_train, n, w, h);
  return out;
}

}  // namespace aivv
