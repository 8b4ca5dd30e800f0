#include "aivv/engine.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "aivv/conformal.hpp"
#include "aivv/io.hpp"

namespace aivv {

namespace {

constexpr int kCheckpointVersion = 1;
constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

}  // namespace

void EngineConfig::validate() const {
  if (input_dim < 1) throw std::invalid_argument("EngineConfig.input_dim must be >= 1");
  if (hidden_size < 1) throw std::invalid_argument("EngineConfig.hidden_size must be >= 1");
  if (lstm_layers < 1) throw std::invalid_argument("EngineConfig.lstm_layers must be >= 1");
  if (dropout_p < 0.0 || dropout_p >= 1.0)
    throw std::invalid_argument("EngineConfig.dropout_p must lie in [0, 1)");
  if (mc_passes < 2) throw std::invalid_argument("EngineConfig.mc_passes must be >= 2");
  if (!(alpha > 0.0) || !(alpha < 1.0))
    throw std::invalid_argument("EngineConfig.alpha must lie in (0, 1)");
  if (!(cal_ratio > 0.0) || !(cal_ratio < 1.0))
    throw std::invalid_argument("EngineConfig.cal_ratio must lie in (0, 1)");
  if (window_w < 1) throw std::invalid_argument("EngineConfig.window_w must be >= 1");
  if (optimizer.lr < 0.0) throw std::invalid_argument("EngineConfig.optimizer.lr must be >= 0");
  if (optimizer.epochs < 1)
    throw std::invalid_argument("EngineConfig.optimizer.epochs must be >= 1");
  if (optimizer.batch_size < 1)
    throw std::invalid_argument("EngineConfig.optimizer.batch_size must be >= 1");
}

Engine::Engine(EngineConfig config, std::uint64_t seed)
    : cfg_(std::move(config)),
      net_((cfg_.validate(), cfg_.input_dim), cfg_.hidden_size, cfg_.lstm_layers),
      rng_(seed),
      alpha_(cfg_.alpha) {
  net_.init_params(rng_);
  adam_m_ = Eigen::VectorXd::Zero(net_.param_count());
  adam_v_ = Eigen::VectorXd::Zero(net_.param_count());
}

void Engine::check_window(std::size_t len) const {
  if (static_cast<int>(len) != cfg_.window_w)
    throw std::invalid_argument("Engine: window length " + std::to_string(len) +
                                " does not match configured W=" +
                                std::to_string(cfg_.window_w));
}

Prediction Engine::mc_predict(std::span<const double> window) {
  return mc_predict(window, rng_);
}

Prediction Engine::mc_predict(std::span<const double> window, Rng& mask_rng) const {
  check_window(window.size());
  const int w = cfg_.window_w;
  const int n = cfg_.mc_passes;

  std::vector<Eigen::MatrixXd> xs(w);
  for (int t = 0; t < w; ++t) {
    const double v = (window[t] - norm_mean_) / norm_std_;
    xs[t] = Eigen::MatrixXd::Constant(1, n, v);
  }
  const auto masks = net_.sample_masks(n, cfg_.dropout_p, mask_rng);
  const Eigen::RowVectorXd y = net_.forward(xs, masks);

  Prediction p;
  p.samples.resize(n);
  for (int k = 0; k < n; ++k) p.samples[k] = y[k] * norm_std_ + norm_mean_;
  p.mean = std::accumulate(p.samples.begin(), p.samples.end(), 0.0) / n;
  // sigma = 0 iff all passes agree; short-circuit keeps that an exact identity
  // instead of a rounding accident.
  const bool all_equal =
      std::all_of(p.samples.begin(), p.samples.end(),
                  [&](double s) { return s == p.samples.front(); });
  if (all_equal) {
    p.mean = p.samples.front();
    p.std = 0.0;
    return p;
  }
  double var = 0.0;
  for (double s : p.samples) var += (s - p.mean) * (s - p.mean);
  p.std = std::sqrt(var / n);
  return p;
}

TrainReport Engine::run_training(const std::vector<WindowPair>& pairs, int epochs,
                                 double lr, const char* what) {
  if (pairs.empty())
    throw std::invalid_argument(std::string(what) + ": fit_pairs must be nonempty");
  if (epochs < 1) throw std::invalid_argument(std::string(what) + ": epochs must be >= 1");
  if (lr < 0.0) throw std::invalid_argument(std::string(what) + ": lr must be >= 0");
  for (const auto& p : pairs) check_window(p.input.size());

  const auto n = static_cast<int>(pairs.size());
  const int bs = std::min(cfg_.optimizer.batch_size, n);
  const int w = cfg_.window_w;

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);

  Eigen::VectorXd grad(net_.param_count());
  TrainReport report;
  report.epoch_loss.reserve(epochs);

  for (int epoch = 0; epoch < epochs; ++epoch) {
    // Fisher-Yates with the engine rng keeps the whole run deterministic.
    for (int i = n - 1; i > 0; --i) {
      const auto j = static_cast<int>(rng_.uniform_int(0, i));
      std::swap(order[i], order[j]);
    }

    double epoch_loss = 0.0;
    for (int start = 0; start < n; start += bs) {
      const int b = std::min(bs, n - start);
      std::vector<Eigen::MatrixXd> xs(w, Eigen::MatrixXd(1, b));
      Eigen::RowVectorXd targets(b);
      for (int col = 0; col < b; ++col) {
        const auto& pair = pairs[order[start + col]];
        for (int t = 0; t < w; ++t)
          xs[t](0, col) = (pair.input[t] - norm_mean_) / norm_std_;
        targets[col] = (pair.target - norm_mean_) / norm_std_;
      }
      const auto masks = net_.sample_masks(b, cfg_.dropout_p, rng_);
      const double loss = net_.loss_and_grad(xs, targets, masks, &grad);
      if (!std::isfinite(loss))
        throw std::runtime_error(std::string(what) + ": non-finite loss at epoch " +
                                 std::to_string(epoch) + ", minibatch " +
                                 std::to_string(start / bs));
      epoch_loss += loss * b;

      ++adam_t_;
      adam_m_ = kAdamBeta1 * adam_m_ + (1.0 - kAdamBeta1) * grad;
      adam_v_ = kAdamBeta2 * adam_v_.array() + (1.0 - kAdamBeta2) * grad.array().square();
      const double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(adam_t_));
      const double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(adam_t_));
      net_.params().array() -=
          lr * (adam_m_.array() / bc1) /
          ((adam_v_.array() / bc2).sqrt() + kAdamEps);
    }
    report.epoch_loss.push_back(epoch_loss / n);
  }
  return report;
}

TrainReport Engine::train(const std::vector<WindowPair>& fit_pairs, int epochs,
                          double lr) {
  if (!norm_set_ && !fit_pairs.empty()) {
    // Freeze z-score statistics from the fit set (inputs and targets share the
    // same signal) so later adaptation cannot shift the feature scale.
    double sum = 0.0, count = 0.0;
    for (const auto& p : fit_pairs) {
      for (double v : p.input) sum += v;
      sum += p.target;
      count += static_cast<double>(p.input.size()) + 1.0;
    }
    const double mean = sum / count;
    double ss = 0.0;
    for (const auto& p : fit_pairs) {
      for (double v : p.input) ss += (v - mean) * (v - mean);
      ss += (p.target - mean) * (p.target - mean);
    }
    const double sd = std::sqrt(ss / count);
    norm_mean_ = mean;
    norm_std_ = sd > 1e-12 ? sd : 1.0;
    norm_set_ = true;
  }
  return run_training(fit_pairs, epochs, lr, "train");
}

void Engine::recompute_cal_scores() {
  cal_residuals_.clear();
  cal_sigmas_.clear();
  cal_residuals_.reserve(cal_pairs_.size());
  cal_sigmas_.reserve(cal_pairs_.size());
  for (const auto& p : cal_pairs_) {
    const auto pred = mc_predict(p.input);
    cal_residuals_.push_back(std::abs(pred.mean - p.target));
    cal_sigmas_.push_back(pred.std);
  }
}

void Engine::refresh_conformal_from_cache() {
  c_alpha_ = conformal_quantile(cal_residuals_, alpha_);
  tau_alpha_ = conformal_quantile(cal_sigmas_, alpha_);
  calibrated_ = true;
}

std::pair<double, double> Engine::calibrate(const std::vector<WindowPair>& cal_pairs,
                                            double alpha) {
  if (cal_pairs.empty()) throw std::invalid_argument("calibrate: empty calibration set");
  if (!(alpha > 0.0) || !(alpha < 1.0))
    throw std::invalid_argument("calibrate: alpha must lie in (0, 1)");
  for (const auto& p : cal_pairs) check_window(p.input.size());
  cal_pairs_ = cal_pairs;
  alpha_ = alpha;
  recompute_cal_scores();
  refresh_conformal_from_cache();
  return {c_alpha_, tau_alpha_};
}

RecalibrateResult Engine::recalibrate(double alpha_prime) {
  if (!calibrated_ || cal_residuals_.empty())
    throw std::runtime_error("recalibrate: no cached calibration residuals");
  RecalibrateResult out;
  const double clamped = std::clamp(alpha_prime, kAlphaMin, kAlphaMax);
  out.clamped = clamped != alpha_prime;
  alpha_ = clamped;
  refresh_conformal_from_cache();
  out.applied_alpha = alpha_;
  out.conformal_bound = c_alpha_;
  out.uncertainty_threshold = tau_alpha_;
  return out;
}

FineTuneResult Engine::fine_tune(const std::vector<WindowPair>& recent_pairs,
                                 int epochs, double lr) {
  FineTuneResult out;
  out.epochs_run = std::clamp(epochs, kFineTuneEpochsMin, kFineTuneEpochsMax);
  out.lr_used = std::clamp(lr, kFineTuneLrMin, kFineTuneLrMax);
  out.epochs_clamped = out.epochs_run != epochs;
  out.lr_clamped = out.lr_used != lr;
  if (recent_pairs.empty()) {
    out.ok = false;
    out.note = "no recent pairs available";
    return out;
  }

  // Snapshot so a non-finite loss reverts cleanly.
  const Eigen::VectorXd params0 = net_.params();
  const Eigen::VectorXd m0 = adam_m_, v0 = adam_v_;
  const std::int64_t t0 = adam_t_;

  try {
    const auto report = run_training(recent_pairs, out.epochs_run, out.lr_used,
                                     "fine_tune");
    out.final_loss = report.epoch_loss.back();
    out.ok = true;
  } catch (const std::exception& e) {
    net_.params() = params0;
    adam_m_ = m0;
    adam_v_ = v0;
    adam_t_ = t0;
    out.ok = false;
    out.note = e.what();
    return out;
  }

  if (calibrated_ && !cal_pairs_.empty()) {
    // Cached-set recalibration: fresh residuals on the held calibration pairs
    // under the updated parameters, quantile at the current alpha.
    recompute_cal_scores();
    refresh_conformal_from_cache();
  }
  return out;
}

double Engine::mse(const std::vector<WindowPair>& pairs) const {
  if (pairs.empty()) throw std::invalid_argument("mse: empty pair set");
  const int w = cfg_.window_w;
  for (const auto& p : pairs) check_window(p.input.size());
  const auto n = static_cast<int>(pairs.size());
  std::vector<Eigen::MatrixXd> xs(w, Eigen::MatrixXd(1, n));
  for (int col = 0; col < n; ++col)
    for (int t = 0; t < w; ++t)
      xs[t](0, col) = (pairs[col].input[t] - norm_mean_) / norm_std_;
  const auto masks = net_.ones_masks(n);
  const Eigen::RowVectorXd y = net_.forward(xs, masks);
  double total = 0.0;
  for (int col = 0; col < n; ++col) {
    const double pred = y[col] * norm_std_ + norm_mean_;
    const double diff = pred - pairs[col].target;
    total += diff * diff;
  }
  return total / n;
}

double Engine::conformal_bound() const {
  if (!calibrated_) throw std::runtime_error("Engine: conformal bound requested before calibration");
  return c_alpha_;
}

double Engine::uncertainty_threshold() const {
  if (!calibrated_) throw std::runtime_error("Engine: uncertainty threshold requested before calibration");
  return tau_alpha_;
}

double Engine::bound_for_alpha(double alpha_prime) const {
  if (!calibrated_) throw std::runtime_error("Engine: bound_for_alpha requested before calibration");
  return conformal_quantile(cal_residuals_, alpha_prime);
}

double Engine::threshold_for_alpha(double alpha_prime) const {
  if (!calibrated_) throw std::runtime_error("Engine: threshold_for_alpha requested before calibration");
  return conformal_quantile(cal_sigmas_, alpha_prime);
}

std::uint64_t Engine::param_hash() const {
  const auto& p = net_.params();
  return fnv1a64(p.data(), sizeof(double) * static_cast<std::size_t>(p.size()));
}

namespace {

nlohmann::json pairs_to_json(const std::vector<WindowPair>& pairs) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& p : pairs)
    arr.push_back({{"input", p.input}, {"target", p.target}, {"raw_index", p.raw_index}});
  return arr;
}

std::vector<WindowPair> pairs_from_json(const nlohmann::json& arr) {
  std::vector<WindowPair> out;
  out.reserve(arr.size());
  for (const auto& j : arr) {
    WindowPair p;
    j.at("input").get_to(p.input);
    j.at("target").get_to(p.target);
    j.at("raw_index").get_to(p.raw_index);
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace

void Engine::save(const std::filesystem::path& path) const {
  nlohmann::json j;
  j["version"] = kCheckpointVersion;
  j["config"] = {{"input_dim", cfg_.input_dim},
                 {"hidden_size", cfg_.hidden_size},
                 {"lstm_layers", cfg_.lstm_layers},
                 {"dropout_p", cfg_.dropout_p},
                 {"mc_passes", cfg_.mc_passes},
                 {"alpha", cfg_.alpha},
                 {"cal_ratio", cfg_.cal_ratio},
                 {"window_w", cfg_.window_w},
                 {"optimizer",
                  {{"lr", cfg_.optimizer.lr},
                   {"epochs", cfg_.optimizer.epochs},
                   {"batch_size", cfg_.optimizer.batch_size}}}};
  j["params"] = std::vector<double>(net_.params().data(),
                                    net_.params().data() + net_.params().size());
  j["adam"] = {{"m", std::vector<double>(adam_m_.data(), adam_m_.data() + adam_m_.size())},
               {"v", std::vector<double>(adam_v_.data(), adam_v_.data() + adam_v_.size())},
               {"t", adam_t_}};
  j["normalizer"] = {{"set", norm_set_}, {"mean", norm_mean_}, {"std", norm_std_}};
  j["conformal"] = {{"calibrated", calibrated_},
                    {"alpha", alpha_},
                    {"c_alpha", c_alpha_},
                    {"tau_alpha", tau_alpha_},
                    {"residuals", cal_residuals_},
                    {"sigmas", cal_sigmas_},
                    {"cal_pairs", pairs_to_json(cal_pairs_)}};
  j["rng_state"] = rng_.state_string();
  write_json_file(path, j);
}

Engine Engine::load(const std::filesystem::path& path) {
  const auto j = read_json_file(path);
  if (!j.contains("version") || j.at("version").get<int>() != kCheckpointVersion)
    throw std::runtime_error("Engine::load: unsupported checkpoint version in " +
                             path.string());
  const auto& jc = j.at("config");
  EngineConfig cfg;
  jc.at("input_dim").get_to(cfg.input_dim);
  jc.at("hidden_size").get_to(cfg.hidden_size);
  jc.at("lstm_layers").get_to(cfg.lstm_layers);
  jc.at("dropout_p").get_to(cfg.dropout_p);
  jc.at("mc_passes").get_to(cfg.mc_passes);
  jc.at("alpha").get_to(cfg.alpha);
  jc.at("cal_ratio").get_to(cfg.cal_ratio);
  jc.at("window_w").get_to(cfg.window_w);
  jc.at("optimizer").at("lr").get_to(cfg.optimizer.lr);
  jc.at("optimizer").at("epochs").get_to(cfg.optimizer.epochs);
  jc.at("optimizer").at("batch_size").get_to(cfg.optimizer.batch_size);

  Engine e(cfg, 0);
  const auto params = j.at("params").get<std::vector<double>>();
  if (static_cast<int>(params.size()) != e.net_.param_count())
    throw std::runtime_error("Engine::load: parameter count mismatch");
  e.net_.params() = Eigen::Map<const Eigen::VectorXd>(params.data(),
                                                      static_cast<long>(params.size()));
  const auto m = j.at("adam").at("m").get<std::vector<double>>();
  const auto v = j.at("adam").at("v").get<std::vector<double>>();
  if (m.size() != params.size() || v.size() != params.size())
    throw std::runtime_error("Engine::load: optimizer state size mismatch");
  e.adam_m_ = Eigen::Map<const Eigen::VectorXd>(m.data(), static_cast<long>(m.size()));
  e.adam_v_ = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<long>(v.size()));
  j.at("adam").at("t").get_to(e.adam_t_);

  j.at("normalizer").at("set").get_to(e.norm_set_);
  j.at("normalizer").at("mean").get_to(e.norm_mean_);
  j.at("normalizer").at("std").get_to(e.norm_std_);

  const auto& jf = j.at("conformal");
  jf.at("calibrated").get_to(e.calibrated_);
  jf.at("alpha").get_to(e.alpha_);
  jf.at("c_alpha").get_to(e.c_alpha_);
  jf.at("tau_alpha").get_to(e.tau_alpha_);
  jf.at("residuals").get_to(e.cal_residuals_);
  jf.at("sigmas").get_to(e.cal_sigmas_);
  e.cal_pairs_ = pairs_from_json(jf.at("cal_pairs"));

  e.rng_.set_state(j.at("rng_state").get<std::string>());
  return e;
}

}  // namespace aivv
