#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "aivv/lstm.hpp"
#include "aivv/rng.hpp"
#include "aivv/sim.hpp"

namespace aivv {

struct OptimConfig {
  double lr = 1e-3;
  int epochs = 60;
  int batch_size = 32;
};

struct EngineConfig {
  int input_dim = 1;
  int hidden_size = 32;
  int lstm_layers = 2;
  double dropout_p = 0.2;
  int mc_passes = 30;    // N
  double alpha = 0.05;   // initial significance
  double cal_ratio = 0.2;// fraction of training pairs held out for calibration
  int window_w = 10;     // expected input window length
  OptimConfig optimizer;

  void validate() const;
};

struct Prediction {
  double mean = 0.0;            // mu_t, degrees
  double std = 0.0;             // sigma_t, population std over the passes
  std::vector<double> samples;  // per-pass outputs
};

struct TrainReport {
  std::vector<double> epoch_loss;  // mean minibatch MSE per epoch (normalized units)
};

struct RecalibrateResult {
  double applied_alpha = 0.0;
  bool clamped = false;
  double conformal_bound = 0.0;
  double uncertainty_threshold = 0.0;
};

struct FineTuneResult {
  bool ok = false;
  int epochs_run = 0;
  double lr_used = 0.0;
  bool epochs_clamped = false;
  bool lr_clamped = false;
  double final_loss = 0.0;
  std::string note;
};

// Alpha/epoch/lr bounds the tuning loop is allowed to move within.
inline constexpr double kAlphaMin = 0.01;
inline constexpr double kAlphaMax = 0.10;
inline constexpr int kFineTuneEpochsMin = 50;
inline constexpr int kFineTuneEpochsMax = 200;
inline constexpr double kFineTuneLrMin = 1e-5;
inline constexpr double kFineTuneLrMax = 1e-3;

// MC-dropout LSTM regressor with split conformal calibration. Value semantics:
// a copy is a deep, fully independent clone (including optimizer and rng
// state), which is exactly what the clone-and-promote loop requires.
class Engine {
 public:
  Engine(EngineConfig config, std::uint64_t seed);

  const EngineConfig& config() const { return cfg_; }
  int param_count() const { return net_.param_count(); }
  const LstmNetwork& network() const { return net_; }
  LstmNetwork& network() { return net_; }

  // N stochastic forward passes with fresh dropout masks from the engine's
  // own rng (mutating) ...
  Prediction mc_predict(std::span<const double> window);
  // ... or from a caller-owned rng, leaving the engine untouched. The gate
  // uses this form so evaluation has no side effects on engine state.
  Prediction mc_predict(std::span<const double> window, Rng& mask_rng) const;

  // Adam + MSE over shuffled minibatches; dropout active. First call freezes
  // the input normalizer from fit_pairs. Throws on non-finite loss.
  TrainReport train(const std::vector<WindowPair>& fit_pairs, int epochs, double lr);

  // Collects residuals/uncertainties over cal_pairs, stores the corrected
  // quantiles C_alpha and tau_alpha plus the caches recalibration needs.
  std::pair<double, double> calibrate(const std::vector<WindowPair>& cal_pairs,
                                      double alpha);

  Engine clone() const { return *this; }

  // Re-applies the quantile at alpha' over cached residuals; out-of-range
  // alpha' is clamped and flagged.
  RecalibrateResult recalibrate(double alpha_prime);

  // Continues Adam training on recent_pairs (epochs/lr clamped to the tuning
  // bounds), then recalibrates on the cached calibration pairs at the current
  // alpha. Non-finite loss reverts parameters and reports failure.
  FineTuneResult fine_tune(const std::vector<WindowPair>& recent_pairs, int epochs,
                           double lr);

  // Deterministic (mask-free) mean squared error in degrees^2.
  double mse(const std::vector<WindowPair>& pairs) const;

  bool calibrated() const { return calibrated_; }
  double conformal_bound() const;
  double uncertainty_threshold() const;
  // Bound/threshold the engine WOULD adopt at alpha_prime, computed over the
  // cached calibration scores without touching engine state. Lets the tuner
  // sweep the alpha grid before committing to one value.
  double bound_for_alpha(double alpha_prime) const;
  double threshold_for_alpha(double alpha_prime) const;
  double alpha() const { return alpha_; }
  const std::vector<double>& cal_residuals() const { return cal_residuals_; }
  const std::vector<double>& cal_sigmas() const { return cal_sigmas_; }
  const std::vector<WindowPair>& cal_pairs() const { return cal_pairs_; }

  double norm_mean() const { return norm_mean_; }
  double norm_std() const { return norm_std_; }

  std::uint64_t param_hash() const;
  std::string rng_state() const { return rng_.state_string(); }
  void set_rng_state(const std::string& s) { rng_.set_state(s); }

  void save(const std::filesystem::path& path) const;
  static Engine load(const std::filesystem::path& path);

 private:
  TrainReport run_training(const std::vector<WindowPair>& pairs, int epochs,
                           double lr, const char* what);
  void refresh_conformal_from_cache();
  void recompute_cal_scores();
  void check_window(std::size_t len) const;

  EngineConfig cfg_;
  LstmNetwork net_;
  Rng rng_;

  Eigen::VectorXd adam_m_, adam_v_;
  std::int64_t adam_t_ = 0;

  bool norm_set_ = false;
  double norm_mean_ = 0.0;
  double norm_std_ = 1.0;

  bool calibrated_ = false;
  double alpha_;
  double c_alpha_ = 0.0;
  double tau_alpha_ = 0.0;
  std::vector<double> cal_residuals_, cal_sigmas_;
  std::vector<WindowPair> cal_pairs_;
};

}  // namespace aivv
