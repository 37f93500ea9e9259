#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "fdi/evaluation.hpp"

namespace fdi {

/// Pilot-bus voltages x[t] and generator voltage increments u[t] in per-unit.
struct TraceSet {
  std::vector<Vec> x;
  std::vector<Vec> u;

  long size() const { return static_cast<long>(x.size()); }
  Eigen::Index n() const { return x.empty() ? 0 : x.front().size(); }
  Eigen::Index p() const { return u.empty() ? 0 : u.front().size(); }
  bool operator==(const TraceSet& other) const;
};

/// CSV with header `t,x_1..x_n,u_1..u_p`. Errors carry the offending line number.
TraceSet parse_traces(std::istream& in);
TraceSet load_traces(const std::string& path);
void write_traces(std::ostream& out, const TraceSet& traces);

class RankDeficientError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct BEstimate {
  Mat B;
  Mat residual_cov;  // unbiased estimate of the process-noise covariance
  long samples = 0;  // regression pairs used
};

/// Least-squares B from x[t+1] - x[t] = B u[t] + noise.
BEstimate estimate_B(const TraceSet& traces);

/// Traces of x' = x + B u + w with u ~ N(0, u_std^2 I) and w ~ N(0, Q).
TraceSet synthetic_traces(const Mat& B, const Mat& Q, const Vec& x_start, long length, double u_std,
                          std::uint64_t seed);

struct VoltageConfig {
  Vec x0;        // setpoint
  Vec x_start;   // nominal initial voltage (and initial estimate)
  double alpha = 0.5;
  Mat B;
  Mat Q;
  Mat R;
  Mat X0;        // spread of the initial estimate; zero when empty
};

struct VoltageModel {
  SystemModel model;
  Controller controller;
};

/// A = I, C = I and the setpoint controller. B must be square and invertible.
VoltageModel build_voltage_model(const VoltageConfig& cfg);

struct VoltageResult {
  CostReport cost;
  Mat mean_x;             // n x (T + 1)
  Mat std_err_x;          // n x (T + 1)
  Mat mean_x_hat;         // n x (T + 1)
  Vec mean_deviation;     // mean ||x[t] - x0||, t = 0..T
  Vec mean_est_deviation; // mean ||x_hat[t] - x0||, t = 0..T
  Vec detection_freq;     // fraction of runs alarming at t = 1..T
};

VoltageResult voltage_attack_experiment(const VoltageConfig& cfg, const AttackPlan& plan, double eta,
                                        const MitigationStrategy& strategy, long T, long W, std::uint64_t seed,
                                        int workers = 1);

}  // namespace fdi
