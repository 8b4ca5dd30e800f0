#pragma once

#include <cstdint>
#include <vector>

namespace aivv {

// Finite-sample corrected split-conformal quantile machinery.
//
// For n calibration scores and miscoverage alpha the corrected level is
//   q = min(1, ceil((n+1)(1-alpha)) / n)
// and the bound is the ceil(q*n)-th smallest score (1-indexed). Both are
// computed through the integer rank k = ceil((n+1)(1-alpha)) so no value ever
// round-trips through floating point where an off-by-one could creep in;
// (n+1)(1-alpha) itself is snapped to the nearest integer when within 1e-9
// to absorb representation error (e.g. 41*0.95 = 38.949999...).

// 1-indexed order-statistic rank, clamped to [1, n].
std::int64_t corrected_quantile_index(std::int64_t n, double alpha);

// The corrected level q = min(1, k/n).
double corrected_quantile_level(std::int64_t n, double alpha);

// k-th smallest element, k 1-indexed in [1, scores.size()]. Copies the input.
double order_statistic(std::vector<double> scores, std::int64_t k);

// Convenience: corrected conformal quantile of a score sample.
double conformal_quantile(const std::vector<double>& scores, double alpha);

}  // namespace aivv
