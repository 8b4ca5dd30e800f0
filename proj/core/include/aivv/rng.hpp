#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

namespace aivv {

// Deterministic random source. All samplers are hand-derived from the raw
// mt19937_64 stream instead of std::*_distribution so that draws are
// bit-identical across standard library implementations, which the replay
// and checkpoint round-trip guarantees rely on.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform on [0, 1) with 53 bits of mantissa.
  double uniform01() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) {
    if (!(lo <= hi)) throw std::invalid_argument("Rng::uniform: lo > hi");
    return lo + (hi - lo) * uniform01();
  }

  // Uniform integer on [lo, hi] inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    if (lo > hi) throw std::invalid_argument("Rng::uniform_int: lo > hi");
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(gen_() % span);
  }

  bool bernoulli(double p) { return uniform01() < p; }

  // Box-Muller; computes a fresh pair each call and discards the second value
  // so the sampler carries no hidden state (keeps serialization trivial).
  double normal(double mean = 0.0, double stddev = 1.0) {
    double u1 = uniform01();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(2.0 * M_PI * u2);
  }

  // Inverse-CDF Laplace with location 0.
  double laplace(double scale) {
    if (scale < 0.0) throw std::invalid_argument("Rng::laplace: scale < 0");
    const double u = uniform01() - 0.5;
    const double t = std::max(1.0 - 2.0 * std::abs(u), 0x1.0p-53);
    return (u < 0.0 ? scale : -scale) * std::log(t);
  }

  // Student-t via ratio of a normal to a chi-squared with nu degrees of freedom.
  double student_t(int nu) {
    if (nu < 1) throw std::invalid_argument("Rng::student_t: nu < 1");
    const double z = normal();
    double chi2 = 0.0;
    for (int i = 0; i < nu; ++i) {
      const double n = normal();
      chi2 += n * n;
    }
    return z / std::sqrt(chi2 / static_cast<double>(nu));
  }

  std::string state_string() const {
    std::ostringstream os;
    os << gen_;
    return os.str();
  }

  void set_state(const std::string& s) {
    std::istringstream is(s);
    is >> gen_;
    if (is.fail()) throw std::runtime_error("Rng::set_state: malformed state string");
  }

  bool operator==(const Rng& other) const { return gen_ == other.gen_; }

 private:
  std::mt19937_64 gen_;
};

// 64-bit FNV-1a over an arbitrary byte range; used for parameter fingerprints.
inline std::uint64_t fnv1a64(const void* data, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 1469598103934665603ull;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace aivv
