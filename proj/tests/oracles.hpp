#pragma once

// Independent reference computations used by the tests. Nothing here calls
// into the library.

#include <cmath>
#include <functional>
#include <numbers>
#include <random>

namespace oracle {

// Composite 5-point Gauss-Legendre on [a, b] with `panels` equal panels.
inline double integrate(const std::function<double(double)>& f, double a, double b, int panels) {
  static const double x[5] = {0.0, 0.5384693101056831, -0.5384693101056831, 0.9061798459386640, -0.9061798459386640};
  static const double w[5] = {0.5688888888888889, 0.4786286704993665, 0.4786286704993665, 0.2369268850561891,
                              0.2369268850561891};
  const double h = (b - a) / panels;
  double total = 0.0;
  for (int p = 0; p < panels; ++p) {
    const double mid = a + (p + 0.5) * h;
    for (int k = 0; k < 5; ++k) total += w[k] * f(mid + 0.5 * h * x[k]);
  }
  return 0.5 * h * total;
}

inline double normal_pdf(double t) { return std::exp(-0.5 * t * t) / std::sqrt(2.0 * std::numbers::pi); }

// Phi(x) by quadrature of the density.
inline double normal_cdf(double x) {
  if (x >= 0.0) return 0.5 + integrate(normal_pdf, 0.0, x, 400);
  return 0.5 - integrate(normal_pdf, x, 0.0, 400);
}

// P(X <= x, Y <= y), standard pair with correlation rho, |rho| < 1, by
// integrating phi(t) Phi((y - rho t) / sqrt(1 - rho^2)) over t.
inline double bvn_cdf(double x, double y, double rho) {
  const double s = std::sqrt(1.0 - rho * rho);
  const double lo = -12.0;
  if (x <= lo) return 0.0;
  auto f = [&](double t) { return normal_pdf(t) * 0.5 * std::erfc(-((y - rho * t) / s) / std::sqrt(2.0)); };
  return integrate(f, lo, std::min(x, 12.0), 4000);
}

// Scalar steady-state Kalman quantities from the quadratic Riccati equation
// with C = 1: P = A^2 P - A^2 P^2 / (P + R) + Q.
struct Scalar {
  double P, K, Pr, Pe;
};

inline Scalar scalar_kf(double A, double Q, double R) {
  // P^2 + (R - A^2 R - Q) P - Q R = 0
  const double b = R - A * A * R - Q;
  const double P = 0.5 * (-b + std::sqrt(b * b + 4.0 * Q * R));
  const double K = P / (P + R);
  return {P, K, P + R, (1.0 - K) * P};
}

// Direct simulation of one scalar error step with C = 1:
// r = A e + w + v + a, alarm iff r^2 / Pr > eta, e' = A_K e + W_K w - K (a - alarm delta) - K v.
struct ScalarStep {
  double A, Q, R, eta;

  template <typename Rng>
  double operator()(double e, double a, double delta, Rng& rng, bool* alarm = nullptr) const {
    const Scalar kf = scalar_kf(A, Q, R);
    std::normal_distribution<double> n01(0.0, 1.0);
    const double w = std::sqrt(Q) * n01(rng);
    const double v = std::sqrt(R) * n01(rng);
    const double r = A * e + w + v + a;
    const bool hit = r * r / kf.Pr > eta;
    if (alarm) *alarm = hit;
    return (1.0 - kf.K) * A * e + (1.0 - kf.K) * w - kf.K * (a - (hit ? delta : 0.0)) - kf.K * v;
  }
};

}  // namespace oracle
