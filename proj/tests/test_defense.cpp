#include <cmath>

#include "doctest.h"
#include "fdi/defense.hpp"

using namespace fdi;

namespace {

Mat m1(double v) { return Mat::Constant(1, 1, v); }
Vec v1(double v) { return Vec::Constant(1, v); }

SystemModel benchmark() { return SystemModel(m1(1), m1(1), m1(1), m1(1), m1(10)); }

}  // namespace

TEST_CASE("detector configuration") {
  CHECK_THROWS_AS(DetectorConfig::make(-1.0), std::invalid_argument);
  CHECK_NOTHROW(DetectorConfig::make(std::numeric_limits<double>::infinity()));
  CHECK_THROWS_AS(MitigationStrategy::noisy(-0.1), std::invalid_argument);
}

TEST_CASE("residual") {
  const SystemModel m = benchmark();
  const Vec pred = predict(m, v1(0.5), v1(0.2));
  CHECK(residual(m, v1(0.5), v1(0.2), pred)(0) == 0.0);
  CHECK(residual(m, v1(0.5), v1(0.2), pred + v1(3.0))(0) == doctest::Approx(3.0));
}

TEST_CASE("conditional residual mean is CAe + a") {
  const SystemModel m = benchmark();
  RngStream s(8, 0);
  const double e = 1.5, a = 4.0;
  const int n = 100000;
  double sum = 0.0, sq = 0.0;
  for (int k = 0; k < n; ++k) {
    const Vec x = plant_step(m, v1(e), v1(0), s);
    const Vec y = observe(m, x, s) + v1(a);
    const double r = residual(m, v1(0), v1(0), y)(0);
    sum += r;
    sq += r * r;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sq / n - mean * mean) / n);
  CHECK(std::abs(mean - (e + a)) < 3.0 * se);
}

TEST_CASE("g statistic") {
  const SteadyState ss = derive_steady_state(benchmark());
  CHECK(g_statistic(ss, v1(0)) == 0.0);
  CHECK(g_statistic(ss, v1(std::sqrt(ss.P_r(0, 0)))) == doctest::Approx(1.0));
  CHECK(g_statistic(ss, v1(10)) == doctest::Approx(100.0 / 13.70156).epsilon(1e-6));
}

TEST_CASE("detect uses a strict threshold") {
  CHECK(detect(DetectorConfig::make(0), 0.0) == 0);
  CHECK(detect(DetectorConfig::make(0), 0.001) == 1);
  CHECK(detect(DetectorConfig::make(5), 5.0) == 0);
  CHECK(detect(DetectorConfig::make(5), std::nextafter(5.0, 6.0)) == 1);
  const SteadyState ss = derive_steady_state(benchmark());
  const auto out = run_detector(ss, DetectorConfig::make(1.0), v1(10));
  CHECK(out.i == 1);
  CHECK(out.r(0) == 10.0);
}

TEST_CASE("mitigation signals") {
  RngStream s(3, 0);
  CHECK(mitigation_signal(MitigationStrategy::perfect(), v1(3), s)(0) == 3.0);
  CHECK(mitigation_signal(MitigationStrategy::noisy(0), v1(3), s)(0) == 3.0);
  CHECK(mitigation_signal(MitigationStrategy::off(), v1(3), s)(0) == 0.0);

  // Noisy draws even at sigma 0, so both streams stay aligned.
  RngStream a(4, 0), b(4, 0);
  mitigation_signal(MitigationStrategy::noisy(0), v1(1), a);
  mitigation_signal(MitigationStrategy::noisy(15), v1(1), b);
  CHECK(a.normal() == b.normal());

  double sq = 0.0;
  const int n = 100000;
  for (int k = 0; k < n; ++k) {
    const double b15 = mitigation_signal(MitigationStrategy::noisy(15), v1(2), s)(0) - 2.0;
    sq += b15 * b15;
  }
  CHECK(std::abs(std::sqrt(sq / n) / 15.0 - 1.0) < 0.02);
}

TEST_CASE("apply_mitigation and the oracle detector") {
  CHECK(apply_mitigation(v1(4), 0, v1(1))(0) == 4.0);
  CHECK(apply_mitigation(v1(4), 1, v1(4))(0) == 0.0);
  const double y = 1.25, a = 3.0;
  CHECK(apply_mitigation(v1(y + a), 1, v1(a))(0) == doctest::Approx(y));
  const double seq[] = {0.0, 2.0, 0.0, -0.001, 0.0};
  for (double v : seq) CHECK(oracle_detect(v1(v)) == (v != 0.0 ? 1 : 0));
  CHECK(oracle_detect(v1(0.001)) == 1);
}
