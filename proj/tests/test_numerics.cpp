#include <cmath>
#include <numbers>

#include "doctest.h"
#include "fdi/numerics.hpp"
#include "oracles.hpp"

using namespace fdi;

namespace {

Mat m1(double v) { return Mat::Constant(1, 1, v); }

}  // namespace

TEST_CASE("solve_dare scalar benchmark matches the quadratic root") {
  const Mat P = solve_dare(m1(1), m1(1), m1(1), m1(10));
  CHECK(P(0, 0) == doctest::Approx((1.0 + std::sqrt(41.0)) / 2.0).epsilon(1e-12));
  CHECK(std::abs(P(0, 0) - oracle::scalar_kf(1, 1, 10).P) < 1e-9);
}

TEST_CASE("solve_dare with A = 0.5") {
  // Frozen from a 1e5-step fixed-point iteration and the quadratic root.
  const double frozen = 1.1327822185373186;
  const Mat P = solve_dare(m1(0.5), m1(1), m1(1), m1(1));
  CHECK(std::abs(P(0, 0) - frozen) < 1e-12);
  CHECK(std::abs(P(0, 0) - oracle::scalar_kf(0.5, 1, 1).P) < 1e-12);
}

TEST_CASE("solve_dare is a fixed point of the Riccati map in 2-D") {
  Mat A(2, 2), C(1, 2), Q(2, 2), R(1, 1);
  A << 1.0, 0.1, 0.0, 0.9;
  C << 1.0, 0.0;
  Q << 0.5, 0.1, 0.1, 0.3;
  R << 2.0;
  const Mat P = solve_dare(A, C, Q, R);
  CHECK((riccati_map(P, A, C, Q, R) - P).norm() < 1e-10);
  CHECK(is_symmetric_pd(P));
}

TEST_CASE("solve_dare reports non-convergence") {
  DareOptions opts;
  opts.max_iterations = 3;
  CHECK_THROWS_AS(solve_dare(m1(1), m1(1), m1(1), m1(10), opts), ConvergenceError);
}

TEST_CASE("std_normal_cdf agrees with quadrature on 1000 points") {
  double worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const double x = -8.0 + 16.0 * k / 999.0;
    worst = std::max(worst, std::abs(std_normal_cdf(x) - oracle::normal_cdf(x)));
  }
  CHECK(worst < 1e-10);
  CHECK(std_normal_cdf(0.0) == 0.5);
  CHECK(std_normal_cdf(-std::numeric_limits<double>::infinity()) == 0.0);
}

TEST_CASE("bivariate_normal_cdf orthant and quadrature oracle") {
  for (double rho : {-0.95, -0.5287, -0.3, 0.0, 0.4, 0.8, 0.97}) {
    CHECK(bivariate_normal_cdf(0, 0, rho) ==
          doctest::Approx(0.25 + std::asin(rho) / (2.0 * std::numbers::pi)).epsilon(1e-12));
    for (double x : {-3.0, -1.2, 0.3, 2.5}) {
      for (double y : {-2.0, 0.1, 1.7}) {
        CHECK(std::abs(bivariate_normal_cdf(x, y, rho) - oracle::bvn_cdf(x, y, rho)) < 1e-9);
      }
    }
  }
  // rho = 0 factorizes; rho = +/-1 degenerate limits.
  CHECK(bivariate_normal_cdf(0.7, -0.2, 0.0) ==
        doctest::Approx(std_normal_cdf(0.7) * std_normal_cdf(-0.2)).epsilon(1e-14));
  CHECK(bivariate_normal_cdf(0.7, -0.2, 1.0) == doctest::Approx(std_normal_cdf(-0.2)));
  CHECK(bivariate_normal_cdf(0.7, -0.2, -1.0) == doctest::Approx(std_normal_cdf(0.7) - std_normal_cdf(0.2)));
}

TEST_CASE("mvn_rect_prob: 1-D interval") {
  const auto g = GaussianSpec::make(Vec::Constant(1, 1.0), m1(4.0));
  const auto p = mvn_rect_prob(g, Rect::make(Vec::Constant(1, -1.0), Vec::Constant(1, 3.0)));
  CHECK(p.value == doctest::Approx(std_normal_cdf(1.0) - std_normal_cdf(-1.0)).epsilon(1e-14));
  CHECK(p.std_error == 0.0);
}

TEST_CASE("mvn_rect_prob: 2-D partitions sum to one") {
  Mat cov(2, 2);
  cov << 11.0, -1.97, -1.97, 1.26;
  const auto g = GaussianSpec::make(Vec::Zero(2), cov);
  const double inf = std::numeric_limits<double>::infinity();
  const double cuts0[] = {-inf, -4.0, 0.5, 6.0, inf};
  const double cuts1[] = {-inf, -1.0, 0.0, 2.0, inf};
  double total = 0.0;
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      Vec lo(2), hi(2);
      lo << cuts0[i], cuts1[j];
      hi << cuts0[i + 1], cuts1[j + 1];
      const double p = mvn_rect_prob(g, Rect::make(lo, hi)).value;
      CHECK(p >= 0.0);
      total += p;
    }
  }
  CHECK(std::abs(total - 1.0) < 1e-6);
}

TEST_CASE("mvn_rect_prob: degenerate 2-D covariance") {
  Mat cov(2, 2);
  cov << 1.0, 0.0, 0.0, 0.0;
  const auto g = GaussianSpec::make(Vec::Zero(2), cov);
  Vec lo(2), hi(2);
  lo << -1.0, -0.5;
  hi << 1.0, 0.5;
  CHECK(mvn_rect_prob(g, Rect::make(lo, hi)).value == doctest::Approx(std_normal_cdf(1) - std_normal_cdf(-1)));
  lo(1) = 0.1;
  CHECK(mvn_rect_prob(g, Rect::make(lo, hi)).value == 0.0);
}

TEST_CASE("mvn_rect_prob: 3-D partitions and independent product") {
  Mat cov(3, 3);
  cov << 2.0, 0.3, -0.2, 0.3, 1.0, 0.4, -0.2, 0.4, 1.5;
  const auto g = GaussianSpec::make(Vec::Zero(3), cov);
  const double inf = std::numeric_limits<double>::infinity();
  const double cuts[] = {-inf, 0.0, inf};
  double total = 0.0;
  for (int mask = 0; mask < 8; ++mask) {
    Vec lo(3), hi(3);
    for (int d = 0; d < 3; ++d) {
      const int b = (mask >> d) & 1;
      lo(d) = cuts[b];
      hi(d) = cuts[b + 1];
    }
    total += mvn_rect_prob(g, Rect::make(lo, hi)).value;
  }
  CHECK(std::abs(total - 1.0) < 1e-6);

  const auto ind = GaussianSpec::make(Vec::Zero(3), Mat::Identity(3, 3));
  const Vec lo = Vec::Constant(3, -1.0);
  const Vec hi = Vec::Constant(3, 0.5);
  const auto p = mvn_rect_prob(ind, Rect::make(lo, hi));
  const double expect = std::pow(std_normal_cdf(0.5) - std_normal_cdf(-1.0), 3);
  CHECK(std::abs(p.value - expect) < 1e-4);
  CHECK(std::abs(p.value - expect) < 4.0 * p.std_error + 1e-9);
}

TEST_CASE("validation of Gaussian specs and rectangles") {
  Mat bad(2, 2);
  bad << 1.0, 2.0, 2.0, 1.0;
  CHECK_THROWS_AS(GaussianSpec::make(Vec::Zero(2), bad), std::invalid_argument);
  Mat asym(2, 2);
  asym << 1.0, 0.1, 0.0, 1.0;
  CHECK_THROWS_AS(GaussianSpec::make(Vec::Zero(2), asym), std::invalid_argument);
  CHECK_THROWS_AS(Rect::make(Vec::Constant(1, 1.0), Vec::Constant(1, 0.0)), std::invalid_argument);
  CHECK_THROWS(Rect::make(Vec::Zero(2), Vec::Zero(1)));
}

TEST_CASE("gchi2_tail_prob agrees with the scalar closed form") {
  // X ~ N(1, 11), weight 1/13.7: P(X^2/13.7 >= 3) = P(|X| >= sqrt(41.1)).
  const auto g = GaussianSpec::make(Vec::Constant(1, 1.0), m1(11.0));
  RngStream s(7, 0);
  const auto p = gchi2_tail_prob(g, m1(1.0 / 13.7), 3.0, s, 200000);
  const double h = std::sqrt(3.0 * 13.7);
  const double exact = std_normal_cdf((-h - 1.0) / std::sqrt(11.0)) + std_normal_cdf((1.0 - h) / std::sqrt(11.0));
  CHECK(std::abs(p.value - exact) < 3.0 * p.std_error);
  RngStream s2(7, 0);
  CHECK(gchi2_tail_prob(g, m1(1.0), std::numeric_limits<double>::infinity(), s2, 10).value == 0.0);
}

TEST_CASE("RngStream determinism and independence") {
  RngStream a(42, 3), b(42, 3), c(42, 4);
  const double xa = a.normal();
  CHECK(xa == b.normal());
  CHECK(xa != c.normal());
  RngStream p(1, 0);
  const RngStream k1 = p.child(5);
  p.normal();  // the parent's position does not affect children
  RngStream k2 = p.child(5);
  RngStream k1c = k1;
  CHECK(k1c.normal() == k2.normal());
}

TEST_CASE("GaussianSampler reproduces the covariance") {
  Mat cov(2, 2);
  cov << 2.0, -0.6, -0.6, 0.5;
  const GaussianSampler sampler(GaussianSpec::make(Vec::Zero(2), cov));
  RngStream s(11, 0);
  Mat acc = Mat::Zero(2, 2);
  const int n = 200000;
  for (int k = 0; k < n; ++k) {
    const Vec x = sampler.sample(s);
    acc += x * x.transpose();
  }
  acc /= n;
  CHECK((acc - cov).cwiseAbs().maxCoeff() < 0.02);
}

TEST_CASE("PSD checks") {
  CHECK(is_symmetric_psd(Mat::Zero(2, 2)));
  CHECK_FALSE(is_symmetric_pd(Mat::Zero(2, 2)));
  CHECK(is_symmetric_pd(Mat::Identity(3, 3)));
  CHECK_FALSE(is_symmetric_psd(m1(-1.0)));
}

TEST_CASE("documented kernel examples") {
  const double inf = std::numeric_limits<double>::infinity();
  CHECK(std_normal_cdf(inf) == 1.0);
  CHECK(std::abs(std_normal_cdf(1.0) - oracle::normal_cdf(1.0)) < 1e-12);
  CHECK(std_normal_cdf(1.0) == doctest::Approx(0.841344746).epsilon(1e-9));

  const auto g1 = GaussianSpec::make(Vec::Zero(1), m1(1.0));
  CHECK(mvn_rect_prob(g1, Rect::make(Vec::Constant(1, -inf), Vec::Zero(1))).value == doctest::Approx(0.5));

  const auto gi = GaussianSpec::make(Vec::Zero(2), Mat::Identity(2, 2));
  CHECK(mvn_rect_prob(gi, Rect::make(Vec::Constant(2, -inf), Vec::Zero(2))).value == doctest::Approx(0.25));
  Mat c(2, 2);
  c << 1.0, 0.5, 0.5, 1.0;
  const auto gc = GaussianSpec::make(Vec::Zero(2), c);
  const double third = mvn_rect_prob(gc, Rect::make(Vec::Constant(2, -inf), Vec::Zero(2))).value;
  CHECK(third == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(std::abs(third - oracle::bvn_cdf(0, 0, 0.5)) < 1e-9);

  RngStream s(3, 0);
  CHECK(gchi2_tail_prob(g1, m1(1.0), 0.0, s, 1000).value == 1.0);
  const auto tail = gchi2_tail_prob(g1, m1(1.0), 3.841, s, 400000);
  CHECK(std::abs(tail.value - 2.0 * oracle::normal_cdf(-std::sqrt(3.841))) < 3.0 * tail.std_error);

  CHECK(solve_dare(m1(1), m1(1), m1(0), m1(1))(0, 0) == doctest::Approx(0.0));
}

TEST_CASE("sample_gaussian examples") {
  RngStream s(5, 1);
  const Vec mean = (Vec(2) << 1.5, -2.0).finished();
  CHECK(sample_gaussian(GaussianSpec::make(mean, Mat::Zero(2, 2)), s) == mean);

  const GaussianSampler unit(GaussianSpec::make(Vec::Zero(1), m1(1.0)));
  double sum = 0.0;
  const int n = 1000000;
  for (int k = 0; k < n; ++k) sum += unit.sample(s)(0);
  CHECK(std::abs(sum / n) < 4.0 / std::sqrt(static_cast<double>(n)));
}
