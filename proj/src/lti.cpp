#include "fdi/lti.hpp"

#include <stdexcept>

namespace fdi {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

Mat zero_like(const Mat& A) { return Mat::Zero(A.rows(), A.cols()); }

}  // namespace

SystemModel::SystemModel(Mat A, Mat B, Mat C, Mat Q, Mat R)
    : SystemModel(A, std::move(B), std::move(C), std::move(Q), std::move(R), zero_like(A)) {}

SystemModel::SystemModel(Mat A, Mat B, Mat C, Mat Q, Mat R, Mat X0)
    : A_(std::move(A)), B_(std::move(B)), C_(std::move(C)), Q_(std::move(Q)), R_(std::move(R)), X0_(std::move(X0)) {
  const Eigen::Index n = A_.rows();
  require(n > 0 && A_.cols() == n, "SystemModel: A must be square and nonempty");
  require(B_.rows() == n, "SystemModel: B must have n rows");
  require(C_.cols() == n && C_.rows() > 0, "SystemModel: C must have n columns");
  require(Q_.rows() == n && Q_.cols() == n, "SystemModel: Q must be n x n");
  require(R_.rows() == C_.rows() && R_.cols() == C_.rows(), "SystemModel: R must be m x m");
  require(X0_.rows() == n && X0_.cols() == n, "SystemModel: X0 must be n x n");
  require(A_.allFinite() && B_.allFinite() && C_.allFinite(), "SystemModel: non-finite matrix entry");
  require(is_symmetric_psd(Q_), "SystemModel: Q must be symmetric positive semidefinite");
  require(is_symmetric_psd(X0_), "SystemModel: X0 must be symmetric positive semidefinite");
  require(is_symmetric_pd(R_), "SystemModel: R must be symmetric positive definite");
  w_ = GaussianSampler(GaussianSpec{Vec::Zero(n), Q_});
  v_ = GaussianSampler(GaussianSpec{Vec::Zero(C_.rows()), R_});
}

bool is_controllable(const SystemModel& model) {
  const Eigen::Index n = model.n();
  if (model.p() == 0) return false;
  Mat ctrb(n, n * model.p());
  Mat block = model.B();
  for (Eigen::Index k = 0; k < n; ++k) {
    ctrb.middleCols(k * model.p(), model.p()) = block;
    block = model.A() * block;
  }
  Eigen::ColPivHouseholderQR<Mat> qr(ctrb);
  return qr.rank() == n;
}

bool is_observable(const SystemModel& model) {
  const Eigen::Index n = model.n();
  Mat obsv(n * model.m(), n);
  Mat block = model.C();
  for (Eigen::Index k = 0; k < n; ++k) {
    obsv.middleRows(k * model.m(), model.m()) = block;
    block = block * model.A();
  }
  Eigen::ColPivHouseholderQR<Mat> qr(obsv);
  return qr.rank() == n;
}

void require_controllable_observable(const SystemModel& model) {
  require(is_controllable(model), "SystemModel: (A, B) is not controllable");
  require(is_observable(model), "SystemModel: (C, A) is not observable");
}

SteadyState derive_steady_state(const SystemModel& model) {
  SteadyState ss;
  ss.P_inf = solve_dare(model.A(), model.C(), model.Q(), model.R());
  const Mat& C = model.C();
  ss.P_r = C * ss.P_inf * C.transpose() + model.R();
  ss.P_r = 0.5 * (ss.P_r + ss.P_r.transpose());
  Eigen::LLT<Mat> llt(ss.P_r);
  if (llt.info() != Eigen::Success) throw std::runtime_error("derive_steady_state: residual covariance is not PD");
  // K = P C' P_r^-1, computed as (P_r^-1 C P)' since P_r and P are symmetric.
  ss.K = llt.solve(C * ss.P_inf).transpose();
  ss.P_r_inv = llt.solve(Mat::Identity(model.m(), model.m()));
  const Mat I = Mat::Identity(model.n(), model.n());
  ss.W_K = I - ss.K * C;
  ss.A_K = model.A() - ss.K * C * model.A();
  ss.P_e = ss.W_K * ss.P_inf;
  ss.P_e = 0.5 * (ss.P_e + ss.P_e.transpose());
  return ss;
}

Vec plant_step(const SystemModel& model, const Vec& x, const Vec& u, RngStream& stream) {
  require(x.size() == model.n() && u.size() == model.p(), "plant_step: dimension mismatch");
  return model.A() * x + model.B() * u + model.process_noise().sample(stream);
}

Vec observe(const SystemModel& model, const Vec& x, RngStream& stream) {
  require(x.size() == model.n(), "observe: dimension mismatch");
  return model.C() * x + model.measurement_noise().sample(stream);
}

Vec predict(const SystemModel& model, const Vec& x_hat, const Vec& u) {
  require(x_hat.size() == model.n() && u.size() == model.p(), "predict: dimension mismatch");
  return model.A() * x_hat + model.B() * u;
}

Vec kf_update(const SystemModel& model, const SteadyState& ss, const Vec& x_hat, const Vec& u, const Vec& y_f) {
  require(y_f.size() == model.m(), "kf_update: dimension mismatch");
  const Vec prior = predict(model, x_hat, u);
  return prior + ss.K * (y_f - model.C() * prior);
}

Vec error_step(const SteadyState& ss, const Vec& e, const Vec& w, const Vec& v, const Vec& a, int i,
               const Vec& delta) {
  const Eigen::Index n = ss.A_K.rows();
  const Eigen::Index m = ss.K.cols();
  require(e.size() == n && w.size() == n && v.size() == m && a.size() == m && delta.size() == m,
          "error_step: dimension mismatch");
  require(i == 0 || i == 1, "error_step: indicator must be 0 or 1");
  const Vec injected = i == 1 ? Vec(a - delta) : a;
  return ss.A_K * e + ss.W_K * w - ss.K * injected - ss.K * v;
}

Vec setpoint_control(const SystemModel& model, const Vec& x_hat, const Vec& x0, double alpha) {
  require(model.p() == model.n(), "setpoint_control: B must be square");
  require(alpha > 0.0 && alpha < 1.0, "setpoint_control: alpha must lie in (0, 1)");
  require(x_hat.size() == model.n() && x0.size() == model.n(), "setpoint_control: dimension mismatch");
  Eigen::FullPivLU<Mat> lu(model.B());
  require(lu.isInvertible(), "setpoint_control: B is singular");
  return alpha * lu.solve(x0 - x_hat);
}

Controller Controller::setpoint(Vec x0, double alpha) {
  require(alpha > 0.0 && alpha < 1.0, "Controller: alpha must lie in (0, 1)");
  return Controller{Kind::Setpoint, std::move(x0), alpha};
}

Vec Controller::control(const SystemModel& model, const Vec& x_hat) const {
  if (kind == Kind::Zero) return Vec::Zero(model.p());
  return setpoint_control(model, x_hat, x0, alpha);
}

StepRecord closed_loop_step(const SystemModel& model, const SteadyState& ss, const LoopState& state,
                            const Controller& controller, RngStream& stream, const MeasurementTap& tap) {
  StepRecord rec;
  rec.u = controller.control(model, state.x_hat);
  const Vec prior = predict(model, state.x_hat, rec.u);
  rec.w = model.process_noise().sample(stream);
  rec.v = model.measurement_noise().sample(stream);
  rec.next.x = model.A() * state.x + model.B() * rec.u + rec.w;
  rec.y = model.C() * rec.next.x + rec.v;
  rec.y_f = tap ? tap(rec.y, prior) : rec.y;
  rec.next.x_hat = prior + ss.K * (rec.y_f - model.C() * prior);
  rec.next.t = state.t + 1;
  return rec;
}

}  // namespace fdi
