#pragma once

#include "fdi/lti.hpp"

namespace fdi {

/// Chi-square detector threshold. eta may be +infinity (detector never fires).
struct DetectorConfig {
  double eta = 0.0;

  static DetectorConfig make(double eta);
};

/// Mitigation signal generator: Perfect (delta = a), Noisy (delta = a + b,
/// b ~ N(0, sigma^2 I) per step) or Off (delta = 0).
struct MitigationStrategy {
  enum class Kind { Perfect, Noisy, Off };
  Kind kind = Kind::Perfect;
  double sigma_mit = 0.0;

  static MitigationStrategy perfect() { return {}; }
  static MitigationStrategy noisy(double sigma);
  static MitigationStrategy off() { return {Kind::Off, 0.0}; }
};

struct DetectionOutcome {
  double g = 0.0;
  int i = 0;
  Vec r;
};

/// Which alarm source closes the mitigation loop.
enum class DetectorKind { ChiSquare, Oracle };

/// y_a - C (A x_hat_prev + B u_prev).
Vec residual(const SystemModel& model, const Vec& x_hat_prev, const Vec& u_prev, const Vec& y_a);

/// r' P_r^-1 r.
double g_statistic(const SteadyState& ss, const Vec& r);

/// 1 iff g > eta (the boundary g == eta does not alarm).
int detect(const DetectorConfig& cfg, double g);

DetectionOutcome run_detector(const SteadyState& ss, const DetectorConfig& cfg, Vec r);

/// Draws b from the stream for Noisy even when sigma is zero, so stream
/// consumption does not depend on sigma.
Vec mitigation_signal(const MitigationStrategy& strategy, const Vec& a_true, RngStream& stream);

/// y_a - i * delta.
Vec apply_mitigation(const Vec& y_a, int i, const Vec& delta);

/// Perfect detector: 1 iff the true injection is nonzero.
int oracle_detect(const Vec& a_true);

}  // namespace fdi
