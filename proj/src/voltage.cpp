#include "fdi/voltage.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "fdi/io.hpp"

namespace fdi {

bool TraceSet::operator==(const TraceSet& other) const { return x == other.x && u == other.u; }

TraceSet parse_traces(std::istream& in) {
  std::string line;
  long line_no = 0;
  std::size_t n = 0;
  std::size_t p = 0;
  bool have_header = false;
  TraceSet out;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split(line, ',');
    if (!have_header) {
      if (fields.size() < 3 || fields[0] != "t") throw ParseError("header must start with t,x_1,...", line_no);
      std::size_t k = 1;
      while (k < fields.size() && fields[k] == "x_" + std::to_string(n + 1)) {
        ++n;
        ++k;
      }
      while (k < fields.size() && fields[k] == "u_" + std::to_string(p + 1)) {
        ++p;
        ++k;
      }
      if (n == 0 || p == 0 || k != fields.size()) {
        throw ParseError("header must be t,x_1..x_n,u_1..u_p", line_no);
      }
      have_header = true;
      continue;
    }
    if (fields.size() != 1 + n + p) {
      throw ParseError("expected " + std::to_string(1 + n + p) + " fields, found " + std::to_string(fields.size()),
                       line_no);
    }
    std::vector<double> values;
    for (std::size_t k = 0; k < fields.size(); ++k) {
      const auto v = try_parse_double(fields[k]);
      if (!v || !std::isfinite(*v)) {
        throw ParseError("field " + std::to_string(k + 1) + " is not a finite number: '" + std::string(fields[k]) + "'",
                         line_no);
      }
      values.push_back(*v);
    }
    out.x.push_back(Eigen::Map<const Vec>(values.data() + 1, static_cast<Eigen::Index>(n)));
    out.u.push_back(Eigen::Map<const Vec>(values.data() + 1 + n, static_cast<Eigen::Index>(p)));
  }
  if (!have_header) throw ParseError("empty trace file");
  return out;
}

TraceSet load_traces(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trace file: " + path);
  try {
    return parse_traces(in);
  } catch (const ParseError& err) {
    throw ParseError(path + ": " + err.what());
  }
}

void write_traces(std::ostream& out, const TraceSet& traces) {
  out << 't';
  for (Eigen::Index k = 0; k < traces.n(); ++k) out << ",x_" << k + 1;
  for (Eigen::Index k = 0; k < traces.p(); ++k) out << ",u_" << k + 1;
  out << '\n';
  for (long t = 0; t < traces.size(); ++t) {
    out << t;
    for (double v : traces.x[static_cast<std::size_t>(t)]) out << ',' << format_double(v);
    for (double v : traces.u[static_cast<std::size_t>(t)]) out << ',' << format_double(v);
    out << '\n';
  }
}

BEstimate estimate_B(const TraceSet& traces) {
  const Eigen::Index n = traces.n();
  const Eigen::Index p = traces.p();
  if (n == 0 || p == 0) throw std::invalid_argument("estimate_B: empty traces");
  if (traces.size() < n * p + 1) {
    throw std::invalid_argument("estimate_B: need at least n*p + 1 records, have " + std::to_string(traces.size()));
  }
  const long k = traces.size() - 1;
  Mat U(k, p);
  Mat D(k, n);
  for (long t = 0; t < k; ++t) {
    const auto s = static_cast<std::size_t>(t);
    if (traces.x[s + 1].size() != n || traces.u[s].size() != p) {
      throw std::invalid_argument("estimate_B: record dimensions drift");
    }
    U.row(t) = traces.u[s].transpose();
    D.row(t) = (traces.x[s + 1] - traces.x[s]).transpose();
  }
  Eigen::ColPivHouseholderQR<Mat> qr(U);
  qr.setThreshold(1e-10);
  if (qr.rank() < p) throw RankDeficientError("estimate_B: input regressors are rank deficient");
  BEstimate est;
  est.samples = k;
  est.B = qr.solve(D).transpose();
  const Mat resid = D - U * est.B.transpose();
  const double dof = static_cast<double>(std::max<long>(1, k - p));
  est.residual_cov = resid.transpose() * resid / dof;
  return est;
}

TraceSet synthetic_traces(const Mat& B, const Mat& Q, const Vec& x_start, long length, double u_std,
                          std::uint64_t seed) {
  if (length < 1) throw std::invalid_argument("synthetic_traces: length must be >= 1");
  if (B.rows() != x_start.size() || Q.rows() != B.rows()) {
    throw std::invalid_argument("synthetic_traces: dimension mismatch");
  }
  RngStream stream(seed, 0);
  const GaussianSampler noise(GaussianSpec{Vec::Zero(B.rows()), Q});
  TraceSet out;
  Vec x = x_start;
  for (long t = 0; t < length; ++t) {
    const Vec u = u_std * stream.standard_normal(B.cols());
    out.x.push_back(x);
    out.u.push_back(u);
    x = x + B * u + noise.sample(stream);
  }
  return out;
}

VoltageModel build_voltage_model(const VoltageConfig& cfg) {
  const Eigen::Index n = cfg.x0.size();
  if (n == 0 || cfg.B.rows() != n || cfg.B.cols() != n) throw std::invalid_argument("voltage: B must be n x n");
  if (Eigen::FullPivLU<Mat>(cfg.B).rank() < n) throw std::invalid_argument("voltage: B is singular");
  if (cfg.x_start.size() != n) throw std::invalid_argument("voltage: x_start has wrong dimension");
  const Mat I = Mat::Identity(n, n);
  const Mat X0 = cfg.X0.size() == 0 ? Mat::Zero(n, n) : cfg.X0;
  SystemModel model(I, cfg.B, I, cfg.Q, cfg.R, X0);
  return {std::move(model), Controller::setpoint(cfg.x0, cfg.alpha)};
}

VoltageResult voltage_attack_experiment(const VoltageConfig& cfg, const AttackPlan& plan, double eta,
                                        const MitigationStrategy& strategy, long T, long W, std::uint64_t seed,
                                        int workers) {
  const VoltageModel vm = build_voltage_model(cfg);
  const SteadyState ss = derive_steady_state(vm.model);
  Scenario scenario;
  scenario.model = &vm.model;
  scenario.ss = &ss;
  scenario.detector = DetectorConfig::make(eta);
  scenario.strategy = strategy;
  scenario.options.controller = vm.controller;
  scenario.options.x_hat0 = cfg.x_start;
  scenario.T = T;
  const Ensemble ens = simulate(scenario, plan, W, seed, workers, true);

  const Eigen::Index n = vm.model.n();
  VoltageResult res;
  res.cost = cost_report(ens);
  res.mean_x = Mat::Zero(n, T + 1);
  res.mean_x_hat = Mat::Zero(n, T + 1);
  res.mean_deviation = Vec::Zero(T + 1);
  res.mean_est_deviation = Vec::Zero(T + 1);
  Mat sq = Mat::Zero(n, T + 1);
  for (long w = 0; w < W; ++w) {
    const Mat& xs = ens.x[static_cast<std::size_t>(w)];
    const Mat& xh = ens.x_hat[static_cast<std::size_t>(w)];
    res.mean_x += xs;
    sq += xs.cwiseProduct(xs);
    res.mean_x_hat += xh;
    for (long t = 0; t <= T; ++t) {
      res.mean_deviation(t) += (xs.col(t) - cfg.x0).norm();
      res.mean_est_deviation(t) += (xh.col(t) - cfg.x0).norm();
    }
  }
  const double Wd = static_cast<double>(W);
  res.mean_x /= Wd;
  res.mean_x_hat /= Wd;
  res.mean_deviation /= Wd;
  res.mean_est_deviation /= Wd;
  const Mat var = (sq / Wd - res.mean_x.cwiseProduct(res.mean_x)).cwiseMax(0.0) * (W > 1 ? Wd / (Wd - 1.0) : 0.0);
  res.std_err_x = (var / Wd).cwiseSqrt();
  res.detection_freq = ens.alarms.colwise().mean().transpose();
  return res;
}

}  // namespace fdi
