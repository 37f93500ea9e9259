#pragma once

#include <functional>

#include "fdi/numerics.hpp"

namespace fdi {

/// Discrete-time LTI plant x' = Ax + Bu + w, y = Cx + v with w ~ N(0,Q),
/// v ~ N(0,R). X0 is the covariance of the initial estimate around its nominal value.
class SystemModel {
 public:
  /// Validates dimensions, Q and X0 PSD, R PD. Structural properties
  /// (controllability, observability) are checked separately.
  SystemModel(Mat A, Mat B, Mat C, Mat Q, Mat R, Mat X0);
  SystemModel(Mat A, Mat B, Mat C, Mat Q, Mat R);

  const Mat& A() const { return A_; }
  const Mat& B() const { return B_; }
  const Mat& C() const { return C_; }
  const Mat& Q() const { return Q_; }
  const Mat& R() const { return R_; }
  const Mat& X0() const { return X0_; }

  Eigen::Index n() const { return A_.rows(); }
  Eigen::Index m() const { return C_.rows(); }
  Eigen::Index p() const { return B_.cols(); }
  bool is_scalar() const { return n() == 1 && m() == 1; }

  const GaussianSampler& process_noise() const { return w_; }
  const GaussianSampler& measurement_noise() const { return v_; }

 private:
  Mat A_, B_, C_, Q_, R_, X0_;
  GaussianSampler w_, v_;
};

bool is_controllable(const SystemModel& model);
bool is_observable(const SystemModel& model);

/// Throws std::invalid_argument unless (A,B) is controllable and (C,A) observable.
void require_controllable_observable(const SystemModel& model);

/// Steady-state Kalman quantities derived from the Riccati solution.
struct SteadyState {
  Mat P_inf;
  Mat K;      // P C' (C P C' + R)^-1
  Mat P_r;    // residual covariance C P C' + R
  Mat P_r_inv;
  Mat A_K;    // A - K C A
  Mat W_K;    // I - K C
  Mat P_e;    // (I - K C) P
};

SteadyState derive_steady_state(const SystemModel& model);

/// Ax + Bu + w with w drawn from N(0, Q).
Vec plant_step(const SystemModel& model, const Vec& x, const Vec& u, RngStream& stream);

/// Cx + v with v drawn from N(0, R).
Vec observe(const SystemModel& model, const Vec& x, RngStream& stream);

/// One-step prediction A x_hat + B u.
Vec predict(const SystemModel& model, const Vec& x_hat, const Vec& u);

/// Kalman update on the (possibly mitigated) measurement y_f.
Vec kf_update(const SystemModel& model, const SteadyState& ss, const Vec& x_hat, const Vec& u, const Vec& y_f);

/// e' = A_K e + W_K w - K (a - i delta) - K v.
Vec error_step(const SteadyState& ss, const Vec& e, const Vec& w, const Vec& v, const Vec& a, int i,
               const Vec& delta);

/// alpha B^-1 (x0 - x_hat); requires square invertible B and alpha in (0, 1).
Vec setpoint_control(const SystemModel& model, const Vec& x_hat, const Vec& x0, double alpha);

struct Controller {
  enum class Kind { Zero, Setpoint };
  Kind kind = Kind::Zero;
  Vec x0;
  double alpha = 0.5;

  static Controller zero() { return {}; }
  static Controller setpoint(Vec x0, double alpha);

  Vec control(const SystemModel& model, const Vec& x_hat) const;
};

struct LoopState {
  Vec x;
  Vec x_hat;
  long t = 0;

  Vec error() const { return x - x_hat; }
};

/// Maps the clean measurement y[t+1] (and the one-step prediction used by the
/// filter) to the measurement y_f[t+1] that reaches the filter.
using MeasurementTap = std::function<Vec(const Vec& y, const Vec& prediction)>;

/// Every signal produced by one closed-loop step, for logging.
struct StepRecord {
  LoopState next;
  Vec u;  // u[t]
  Vec w;  // w[t]
  Vec v;  // v[t+1]
  Vec y;  // y[t+1]
  Vec y_f;
};

/// Advances (x, x_hat) by one step: control from x_hat, plant step, measurement,
/// tap, and filter update. Draws w then v from the stream.
StepRecord closed_loop_step(const SystemModel& model, const SteadyState& ss, const LoopState& state,
                            const Controller& controller, RngStream& stream, const MeasurementTap& tap = {});

}  // namespace fdi
