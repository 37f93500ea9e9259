#include "fdi/defense.hpp"

#include <cmath>
#include <stdexcept>

namespace fdi {

DetectorConfig DetectorConfig::make(double eta) {
  if (std::isnan(eta) || eta < 0.0) throw std::invalid_argument("DetectorConfig: eta must be >= 0");
  return DetectorConfig{eta};
}

MitigationStrategy MitigationStrategy::noisy(double sigma) {
  if (std::isnan(sigma) || sigma < 0.0 || std::isinf(sigma)) {
    throw std::invalid_argument("MitigationStrategy: sigma_mit must be finite and >= 0");
  }
  return {Kind::Noisy, sigma};
}

Vec residual(const SystemModel& model, const Vec& x_hat_prev, const Vec& u_prev, const Vec& y_a) {
  if (y_a.size() != model.m()) throw std::invalid_argument("residual: dimension mismatch");
  return y_a - model.C() * predict(model, x_hat_prev, u_prev);
}

double g_statistic(const SteadyState& ss, const Vec& r) {
  if (r.size() != ss.P_r_inv.rows()) throw std::invalid_argument("g_statistic: dimension mismatch");
  return std::max(0.0, r.dot(ss.P_r_inv * r));
}

int detect(const DetectorConfig& cfg, double g) { return g > cfg.eta ? 1 : 0; }

DetectionOutcome run_detector(const SteadyState& ss, const DetectorConfig& cfg, Vec r) {
  DetectionOutcome out;
  out.g = g_statistic(ss, r);
  out.i = detect(cfg, out.g);
  out.r = std::move(r);
  return out;
}

Vec mitigation_signal(const MitigationStrategy& strategy, const Vec& a_true, RngStream& stream) {
  switch (strategy.kind) {
    case MitigationStrategy::Kind::Perfect:
      return a_true;
    case MitigationStrategy::Kind::Noisy: {
      const Vec b = strategy.sigma_mit * stream.standard_normal(a_true.size());
      return a_true + b;
    }
    case MitigationStrategy::Kind::Off:
      break;
  }
  return Vec::Zero(a_true.size());
}

Vec apply_mitigation(const Vec& y_a, int i, const Vec& delta) {
  if (y_a.size() != delta.size()) throw std::invalid_argument("apply_mitigation: dimension mismatch");
  if (i == 0) return y_a;
  return y_a - delta;
}

int oracle_detect(const Vec& a_true) { return a_true.squaredNorm() > 0.0 ? 1 : 0; }

}  // namespace fdi
