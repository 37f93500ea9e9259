#pragma once

#include <string>
#include <vector>

#include "fdi/attack.hpp"
#include "fdi/defense.hpp"

namespace fdi {

/// Every loop signal for t = 0..T. Index 0 holds the initial state; the
/// measurement-side entries at t = 0 are zero. u[t] and w[t] are the input and
/// process noise that produced x[t]; v[t] is the noise in y[t].
struct Trajectory {
  std::vector<Vec> x, x_hat, e, y, y_a, y_f, a, delta, u, w, v;
  std::vector<double> g;
  std::vector<int> i;

  long horizon() const { return static_cast<long>(x.size()) - 1; }
};

struct RolloutOptions {
  Controller controller = Controller::zero();
  /// Nominal initial estimate; x_hat[0] ~ N(x_hat0, X0). Empty means zero.
  Vec x_hat0;
  DetectorKind detector_kind = DetectorKind::ChiSquare;
};

/// Child streams of the per-run stream.
inline constexpr std::uint64_t kNoiseStream = 0;
inline constexpr std::uint64_t kMitigationStream = 1;
inline constexpr std::uint64_t kInitialStream = 2;

/// One run of the attacked, detected and mitigated loop over t = 1..T.
/// x[0] = x_hat[0] + e[0] with e[0] ~ N(0, P_e).
Trajectory rollout(const SystemModel& model, const SteadyState& ss, const AttackPlan& plan,
                   const DetectorConfig& detector, const MitigationStrategy& strategy, long T, const RngStream& stream,
                   const RolloutOptions& opts = {});

struct CostReport {
  std::vector<double> cost_per_t;     // t = 1..T
  std::vector<double> std_err_per_t;
  long runs = 0;
  std::string digest;
  /// Inner sums at T, one per run, for paired comparisons.
  std::vector<double> run_totals;
};

CostReport empirical_cost(const std::vector<Trajectory>& trajectories);

/// A fully specified loop to simulate under some attack plan.
struct Scenario {
  const SystemModel* model = nullptr;
  const SteadyState* ss = nullptr;
  DetectorConfig detector;
  MitigationStrategy strategy;
  RolloutOptions options;
  long T = 10;
};

/// Per-run aggregates of W rollouts. Run w uses RngStream(seed, w).
struct Ensemble {
  Mat cumulative_cost;  // W x T
  Mat alarms;           // W x T, i[t]
  std::vector<Mat> x;      // per run, n x (T + 1)
  std::vector<Mat> x_hat;  // per run, n x (T + 1)

  long runs() const { return cumulative_cost.rows(); }
};

Ensemble simulate(const Scenario& scenario, const AttackPlan& plan, long W, std::uint64_t seed, int workers = 1,
                  bool keep_states = false);

CostReport cost_report(const Ensemble& ensemble, const std::string& digest = {});

struct PairedDifference {
  double mean = 0.0;
  double std_error = 0.0;
};

/// Mean and standard error of the per-run differences a - b at T.
PairedDifference paired_difference(const CostReport& a, const CostReport& b);

/// One report per plan; every plan sees the same per-run streams.
std::vector<CostReport> compare_attacks(const Scenario& scenario, const std::vector<AttackPlan>& plans, long W,
                                        std::uint64_t seed, int workers = 1, const std::string& digest = {});

/// Cost of false positives: chi-square system minus oracle reference, both
/// without attack.
PairedDifference fp_cost(const Scenario& scenario, long W, std::uint64_t seed, int workers = 1);

/// Cost of misdetections: chi-square system minus oracle reference, both under
/// the same attack plan.
PairedDifference md_cost(const Scenario& scenario, const AttackPlan& plan, long W, std::uint64_t seed,
                         int workers = 1);

}  // namespace fdi
