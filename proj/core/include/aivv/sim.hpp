#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace aivv {

enum class Scenario { Hovering, Lawnmower, Complex };
enum class NoiseFamily { Laplace, StudentT };
enum class FaultKind { ElectricalSpike, MechanicalDamper };

std::string to_string(Scenario s);
std::string to_string(NoiseFamily f);
std::string to_string(FaultKind k);
Scenario scenario_from_string(const std::string& s);
NoiseFamily noise_family_from_string(const std::string& s);
FaultKind fault_kind_from_string(const std::string& s);

struct PidGains {
  double kp = 0.5;  // proportional gain
  double ti = 20.0; // integral time, s
  double td = 1.0;  // derivative time, s
};

struct RefFilter {
  double max_velocity = 10.0;     // deg/s rate limit on the shaped setpoint
  double damping_ratio = 1.0;     // critically damped by default
  double natural_frequency = 1.5; // rad/s
};

struct SimConfig {
  double dt = 0.02;                  // s
  int n_steps = 1400;
  double nomoto_gain = 0.5;          // K, 1/s
  double nomoto_time_constant = 2.0; // T, s
  PidGains pid;
  RefFilter ref_filter;
  Scenario scenario = Scenario::Hovering;
  std::uint64_t seed = 1;
  double rudder_limit = 35.0;        // deg, actuator saturation

  void validate() const;  // throws std::invalid_argument naming the bad field
};

struct NoiseSpec {
  NoiseFamily family = NoiseFamily::Laplace;
  double scale = 0.3;        // deg
  double drift_rate = 0.001; // deg/step, accumulated from drift_start
  int drift_start = 0;

  void validate() const;
};

struct FaultSpec {
  FaultKind kind = FaultKind::ElectricalSpike;
  int onset = 1200;
  double magnitude = 15.0; // deg for spike, damping-loss fraction in [0,1] for damper
  int duration = 10;       // steps, spike only

  void validate(int n_steps) const;
};

struct TelemetryDataset {
  std::vector<double> yaw;             // measured yaw (deg), length n_steps
  std::vector<double> setpoint;        // raw commanded heading (deg)
  std::vector<std::uint8_t> fault_mask;// ground-truth anomalous steps
  Scenario scenario = Scenario::Hovering;
  std::uint64_t seed = 0;
  SimConfig config;
  NoiseSpec noise;
  std::optional<FaultSpec> fault;
};

struct WindowPair {
  std::vector<double> input; // length-W yaw window
  double target = 0.0;       // yaw value H steps past the window end
  int raw_index = 0;         // step index of the target in the raw series
};

struct WindowSplit {
  std::vector<WindowPair> train;
  std::vector<WindowPair> test;
  int split_index = 0; // first raw index of the test segment
};

std::vector<double> generate_reference(Scenario scenario, int n_steps, double dt);

TelemetryDataset simulate(const SimConfig& config, const NoiseSpec& noise,
                          const std::optional<FaultSpec>& fault);

// Windows one contiguous raw range [begin, end); raw_index is absolute.
std::vector<WindowPair> window_series(const std::vector<double>& series, int begin,
                                      int end, int w, int h);

// Splits the raw series first (train |-> [0, round(ratio*n))), then windows each
// split independently. split_ratio == 1 yields an empty test split.
WindowSplit make_windows(const TelemetryDataset& dataset, int w, int h,
                         double split_ratio);

}  // namespace aivv
