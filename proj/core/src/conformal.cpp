#include "aivv/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace aivv {

std::int64_t corrected_quantile_index(std::int64_t n, double alpha) {
  if (n < 1) throw std::invalid_argument("corrected_quantile_index: n must be >= 1");
  if (!(alpha > 0.0) || !(alpha < 1.0))
    throw std::invalid_argument("corrected_quantile_index: alpha must lie in (0, 1)");
  const double raw = static_cast<double>(n + 1) * (1.0 - alpha);
  const double snapped = std::nearbyint(raw);
  const double value =
      std::abs(raw - snapped) <= 1e-9 * std::max(1.0, std::abs(raw)) ? snapped : raw;
  auto k = static_cast<std::int64_t>(std::ceil(value));
  return std::clamp<std::int64_t>(k, 1, n);
}

double corrected_quantile_level(std::int64_t n, double alpha) {
  const auto k = corrected_quantile_index(n, alpha);
  return std::min(1.0, static_cast<double>(k) / static_cast<double>(n));
}

double order_statistic(std::vector<double> scores, std::int64_t k) {
  const auto n = static_cast<std::int64_t>(scores.size());
  if (n == 0) throw std::invalid_argument("order_statistic: empty sample");
  if (k < 1 || k > n) throw std::invalid_argument("order_statistic: k out of range");
  std::nth_element(scores.begin(), scores.begin() + (k - 1), scores.end());
  return scores[k - 1];
}

double conformal_quantile(const std::vector<double>& scores, double alpha) {
  const auto n = static_cast<std::int64_t>(scores.size());
  if (n == 0) throw std::invalid_argument("conformal_quantile: empty sample");
  return order_statistic(scores, corrected_quantile_index(n, alpha));
}

}  // namespace aivv
