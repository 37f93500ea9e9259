#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "fdi/config.hpp"

namespace fdi {

struct CommandOptions {
  std::string out_dir = "out";
  int workers = 1;
  std::string policy_path;     // overrides the config's paths.policy
  std::ostream* log = nullptr; // progress and statistics; never part of the outputs
};

/// Refused policy artifact (wrong digest, missing file, bad format).
class ArtifactError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SolveResult {
  Policy policy;
  SolveStats stats;
  long truncation_warnings = 0;
  std::string digest;
  std::string path;  // empty when not written
};

/// Builds the transition model for the configured MDP and runs value iteration.
SolveResult solve_policy(const RunConfig& cfg, int workers, std::ostream* log = nullptr);

/// Reads a policy artifact and checks it against the config digest.
Policy load_policy(const std::string& path, const RunConfig& cfg);

/// policy.txt
SolveResult cmd_solve(const RunConfig& cfg, const CommandOptions& opts);

struct SweepRow {
  double a = 0.0;
  double detection = 0.0;
  double reward = 0.0;
};

/// sweep_action.csv: a,detection_prob,expected_reward at e = 0.
std::vector<SweepRow> cmd_sweep_action(const RunConfig& cfg, const CommandOptions& opts);

struct PlanCurve {
  std::string plan;
  CostReport report;
};

struct EvaluateResult {
  std::vector<PlanCurve> curves;  // MDP, Constant, Ramp, None
  /// Paired difference at T of MDP minus each other plan.
  std::vector<std::pair<std::string, PairedDifference>> mdp_margin;
};

/// cost_curves.csv (plan,t,cost,std_err) and cost_margins.csv.
EvaluateResult cmd_evaluate(const RunConfig& cfg, const CommandOptions& opts);

struct FpMdRow {
  double eta = 0.0;
  double sigma_mit = 0.0;
  PairedDifference fp;
  PairedDifference md;
};

/// fpmd.csv over the configured eta x sigma_mit grid. By default the policy
/// artifact for the configured eta drives every attack; with
/// sweep.policy_per_eta the policy is re-solved at each swept eta.
std::vector<FpMdRow> cmd_fpmd(const RunConfig& cfg, const CommandOptions& opts);

struct VoltageCurves {
  std::string plan;
  VoltageResult result;
};

/// voltage_curves.csv, detection_freq.csv and policy_table.csv.
std::vector<VoltageCurves> cmd_voltage(const RunConfig& cfg, const CommandOptions& opts);

/// Prints B and the residual covariance to `print` and writes b_estimate.json,
/// a config fragment with model.B and model.Q.
BEstimate cmd_estimate_b(const std::string& trace_path, const CommandOptions& opts, std::ostream& print);

}  // namespace fdi
