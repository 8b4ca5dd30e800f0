#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "aivv/rng.hpp"

using aivv::Rng;

TEST_CASE("rng: same seed reproduces the stream exactly") {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) {
    CHECK(a.uniform01() == b.uniform01());
  }
}

TEST_CASE("rng: state round-trips through the string form") {
  Rng a(7);
  for (int i = 0; i < 37; ++i) a.uniform01();
  Rng b(0);
  b.set_state(a.state_string());
  for (int i = 0; i < 100; ++i) CHECK(a.laplace(0.5) == b.laplace(0.5));
}

TEST_CASE("rng: uniform01 stays in [0,1) and covers both halves") {
  Rng r(3);
  int low = 0;
  for (int i = 0; i < 10000; ++i) {
    const double u = r.uniform01();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    if (u < 0.5) ++low;
  }
  CHECK(low > 4500);
  CHECK(low < 5500);
}

TEST_CASE("rng: laplace sample moments match the law") {
  Rng r(11);
  const double scale = 0.3;
  const int n = 200000;
  double sum = 0.0, sum_abs = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = r.laplace(scale);
    sum += x;
    sum_abs += std::abs(x);
  }
  // Mean 0, E|X| = scale for Laplace.
  CHECK(std::abs(sum / n) < 0.01);
  CHECK(sum_abs / n == doctest::Approx(scale).epsilon(0.03));
}

TEST_CASE("rng: normal sample moments") {
  Rng r(13);
  const int n = 200000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    sum += x;
    sum2 += x * x;
  }
  CHECK(std::abs(sum / n) < 0.02);
  CHECK(sum2 / n == doctest::Approx(1.0).epsilon(0.03));
}

TEST_CASE("rng: student_t is heavier tailed than normal") {
  Rng r(17);
  const int n = 100000;
  int t_tail = 0, n_tail = 0;
  for (int i = 0; i < n; ++i) {
    if (std::abs(r.student_t(3)) > 3.0) ++t_tail;
    if (std::abs(r.normal()) > 3.0) ++n_tail;
  }
  CHECK(t_tail > 2 * n_tail);
}

TEST_CASE("rng: argument validation") {
  Rng r(1);
  CHECK_THROWS_AS(r.laplace(-1.0), std::invalid_argument);
  CHECK_THROWS_AS(r.student_t(0), std::invalid_argument);
  CHECK_THROWS_AS(r.uniform(2.0, 1.0), std::invalid_argument);
}

TEST_CASE("fnv1a64: stable fingerprints") {
  const char data[] = "abc";
  const auto h1 = aivv::fnv1a64(data, 3);
  const auto h2 = aivv::fnv1a64(data, 3);
  CHECK(h1 == h2);
  const char other[] = "abd";
  CHECK(h1 != aivv::fnv1a64(other, 3));
}
