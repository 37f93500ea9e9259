#include "fdi/evaluation.hpp"

#include <cmath>
#include <stdexcept>

#include "fdi/parallel.hpp"

namespace fdi {

namespace {

double mean_of(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

// Standard error of the mean, with the unbiased variance.
double std_error_of(const std::vector<double>& xs, double mean) {
  if (xs.size() < 2) return 0.0;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1) / static_cast<double>(xs.size()));
}

}  // namespace

Trajectory rollout(const SystemModel& model, const SteadyState& ss, const AttackPlan& plan,
                   const DetectorConfig& detector, const MitigationStrategy& strategy, long T, const RngStream& stream,
                   const RolloutOptions& opts) {
  if (T < 1) throw std::invalid_argument("rollout: T must be >= 1");
  const Eigen::Index n = model.n();
  const Eigen::Index m = model.m();
  const Vec x_hat0 = opts.x_hat0.size() == 0 ? Vec::Zero(n) : opts.x_hat0;
  if (x_hat0.size() != n) throw std::invalid_argument("rollout: initial estimate has wrong dimension");

  RngStream noise = stream.child(kNoiseStream);
  RngStream mitigation = stream.child(kMitigationStream);
  RngStream init = stream.child(kInitialStream);

  const auto steps = static_cast<std::size_t>(T + 1);
  Trajectory tr;
  for (auto* v : {&tr.x, &tr.x_hat, &tr.e, &tr.w}) v->assign(steps, Vec::Zero(n));
  for (auto* v : {&tr.y, &tr.y_a, &tr.y_f, &tr.a, &tr.delta, &tr.v}) v->assign(steps, Vec::Zero(m));
  tr.u.assign(steps, Vec::Zero(model.p()));
  tr.g.assign(steps, 0.0);
  tr.i.assign(steps, 0);

  LoopState state;
  state.x_hat = GaussianSampler(GaussianSpec{x_hat0, model.X0()}).sample(init);
  const Vec e0 = GaussianSampler(GaussianSpec{Vec::Zero(n), ss.P_e}).sample(init);
  state.x = state.x_hat + e0;
  tr.x[0] = state.x;
  tr.x_hat[0] = state.x_hat;
  tr.e[0] = state.x - state.x_hat;

  for (long t = 1; t <= T; ++t) {
    const auto k = static_cast<std::size_t>(t);
    const Vec a = attack_at(plan, t, state.error(), static_cast<int>(T - t + 1), m);
    auto tap = [&](const Vec& y, const Vec& prior) {
      tr.y_a[k] = y + a;
      const Vec r = tr.y_a[k] - model.C() * prior;
      tr.g[k] = g_statistic(ss, r);
      tr.i[k] = opts.detector_kind == DetectorKind::Oracle ? oracle_detect(a) : detect(detector, tr.g[k]);
      tr.delta[k] = mitigation_signal(strategy, a, mitigation);
      tr.y_f[k] = apply_mitigation(tr.y_a[k], tr.i[k], tr.delta[k]);
      return tr.y_f[k];
    };
    StepRecord rec = closed_loop_step(model, ss, state, opts.controller, noise, tap);
    state = std::move(rec.next);
    tr.a[k] = a;
    tr.y[k] = rec.y;
    tr.u[k] = rec.u;
    tr.w[k] = rec.w;
    tr.v[k] = rec.v;
    tr.x[k] = state.x;
    tr.x_hat[k] = state.x_hat;
    tr.e[k] = state.x - state.x_hat;
  }
  return tr;
}

CostReport empirical_cost(const std::vector<Trajectory>& trajectories) {
  if (trajectories.empty()) throw std::invalid_argument("empirical_cost: no trajectories");
  const long T = trajectories.front().horizon();
  Ensemble ens;
  ens.cumulative_cost = Mat::Zero(static_cast<Eigen::Index>(trajectories.size()), T);
  ens.alarms = Mat::Zero(static_cast<Eigen::Index>(trajectories.size()), T);
  for (std::size_t w = 0; w < trajectories.size(); ++w) {
    const Trajectory& tr = trajectories[w];
    if (tr.horizon() != T) throw std::invalid_argument("empirical_cost: trajectories differ in length");
    double acc = 0.0;
    for (long t = 1; t <= T; ++t) {
      acc += tr.e[static_cast<std::size_t>(t)].squaredNorm();
      ens.cumulative_cost(static_cast<Eigen::Index>(w), t - 1) = acc;
    }
  }
  return cost_report(ens);
}

Ensemble simulate(const Scenario& scenario, const AttackPlan& plan, long W, std::uint64_t seed, int workers,
                  bool keep_states) {
  if (W < 1) throw std::invalid_argument("simulate: W must be >= 1");
  const long T = scenario.T;
  Ensemble ens;
  ens.cumulative_cost = Mat::Zero(W, T);
  ens.alarms = Mat::Zero(W, T);
  if (keep_states) {
    ens.x.resize(static_cast<std::size_t>(W));
    ens.x_hat.resize(static_cast<std::size_t>(W));
  }
  parallel_for(W, workers, [&](long w) {
    const Trajectory tr = rollout(*scenario.model, *scenario.ss, plan, scenario.detector, scenario.strategy, T,
                                  RngStream(seed, static_cast<std::uint64_t>(w)), scenario.options);
    double acc = 0.0;
    for (long t = 1; t <= T; ++t) {
      acc += tr.e[static_cast<std::size_t>(t)].squaredNorm();
      ens.cumulative_cost(w, t - 1) = acc;
      ens.alarms(w, t - 1) = tr.i[static_cast<std::size_t>(t)];
    }
    if (keep_states) {
      Mat xs(scenario.model->n(), T + 1);
      Mat xh(scenario.model->n(), T + 1);
      for (long t = 0; t <= T; ++t) {
        xs.col(t) = tr.x[static_cast<std::size_t>(t)];
        xh.col(t) = tr.x_hat[static_cast<std::size_t>(t)];
      }
      ens.x[static_cast<std::size_t>(w)] = std::move(xs);
      ens.x_hat[static_cast<std::size_t>(w)] = std::move(xh);
    }
  });
  return ens;
}

CostReport cost_report(const Ensemble& ensemble, const std::string& digest) {
  const long W = ensemble.runs();
  const long T = ensemble.cumulative_cost.cols();
  if (W < 1 || T < 1) throw std::invalid_argument("cost_report: empty ensemble");
  CostReport report;
  report.runs = W;
  report.digest = digest;
  std::vector<double> column(static_cast<std::size_t>(W));
  for (long t = 0; t < T; ++t) {
    for (long w = 0; w < W; ++w) column[static_cast<std::size_t>(w)] = ensemble.cumulative_cost(w, t);
    const double mean = mean_of(column);
    report.cost_per_t.push_back(mean);
    report.std_err_per_t.push_back(std_error_of(column, mean));
  }
  report.run_totals = column;
  return report;
}

PairedDifference paired_difference(const CostReport& a, const CostReport& b) {
  if (a.run_totals.size() != b.run_totals.size() || a.run_totals.empty()) {
    throw std::invalid_argument("paired_difference: reports are not paired");
  }
  std::vector<double> diff(a.run_totals.size());
  for (std::size_t w = 0; w < diff.size(); ++w) diff[w] = a.run_totals[w] - b.run_totals[w];
  const double mean = mean_of(diff);
  return {mean, std_error_of(diff, mean)};
}

std::vector<CostReport> compare_attacks(const Scenario& scenario, const std::vector<AttackPlan>& plans, long W,
                                        std::uint64_t seed, int workers, const std::string& digest) {
  if (plans.empty()) throw std::invalid_argument("compare_attacks: no plans");
  std::vector<CostReport> out;
  for (const AttackPlan& plan : plans) out.push_back(cost_report(simulate(scenario, plan, W, seed, workers), digest));
  return out;
}

PairedDifference fp_cost(const Scenario& scenario, long W, std::uint64_t seed, int workers) {
  Scenario reference = scenario;
  reference.options.detector_kind = DetectorKind::Oracle;
  Scenario tested = scenario;
  tested.options.detector_kind = DetectorKind::ChiSquare;
  const AttackPlan quiet = AttackPlan::none();
  return paired_difference(cost_report(simulate(tested, quiet, W, seed, workers)),
                           cost_report(simulate(reference, quiet, W, seed, workers)));
}

PairedDifference md_cost(const Scenario& scenario, const AttackPlan& plan, long W, std::uint64_t seed, int workers) {
  Scenario reference = scenario;
  reference.options.detector_kind = DetectorKind::Oracle;
  Scenario tested = scenario;
  tested.options.detector_kind = DetectorKind::ChiSquare;
  return paired_difference(cost_report(simulate(tested, plan, W, seed, workers)),
                           cost_report(simulate(reference, plan, W, seed, workers)));
}

}  // namespace fdi
