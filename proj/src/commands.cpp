#include "fdi/commands.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "fdi/io.hpp"
#include "fdi/parallel.hpp"

namespace fdi {

namespace {

namespace fs = std::filesystem;

class CsvWriter {
 public:
  CsvWriter(const std::string& dir, const std::string& name, const RunConfig& cfg, const std::string& header) {
    fs::create_directories(dir);
    path_ = (fs::path(dir) / name).string();
    out_.open(path_, std::ios::binary | std::ios::trunc);
    if (!out_) throw std::runtime_error("cannot write " + path_);
    out_ << "# digest=" << cfg.digest() << " seed=" << cfg.eval.seed << '\n' << header << '\n';
  }

  template <typename... Fields>
  void row(const Fields&... fields) {
    bool first = true;
    ((out_ << (first ? "" : ",") << cell(fields), first = false), ...);
    out_ << '\n';
  }

 private:
  static std::string cell(double v) { return format_double(v); }
  static std::string cell(long v) { return std::to_string(v); }
  static std::string cell(int v) { return std::to_string(v); }
  static std::string cell(const std::string& v) { return v; }
  static std::string cell(const char* v) { return v; }

  std::string path_;
  std::ofstream out_;
};

struct Loop {
  SystemModel model;
  SteadyState ss;

  explicit Loop(const RunConfig& cfg) : model(cfg.model()), ss(derive_steady_state(model)) {}

  Scenario scenario(const RunConfig& cfg, const MitigationStrategy& strategy) const {
    Scenario s;
    s.model = &model;
    s.ss = &ss;
    s.detector = DetectorConfig::make(cfg.eta);
    s.strategy = strategy;
    s.options.controller = cfg.controller;
    s.options.x_hat0 = cfg.eval.x_hat0;
    s.T = cfg.eval.T;
    return s;
  }
};

std::string resolve_policy_path(const RunConfig& cfg, const CommandOptions& opts) {
  if (!opts.policy_path.empty()) return opts.policy_path;
  if (!cfg.policy_path.empty()) return cfg.policy_path;
  return (fs::path(opts.out_dir) / "policy.txt").string();
}

AttackPlan mdp_plan(const RunConfig& cfg, Policy policy) {
  return AttackPlan::mdp(std::make_shared<const Policy>(std::move(policy)), cfg.a_max, cfg.convention);
}

std::vector<std::pair<std::string, AttackPlan>> plan_set(const RunConfig& cfg, Policy policy) {
  return {{"mdp", mdp_plan(cfg, std::move(policy))},
          {"constant", AttackPlan::constant(cfg.constant, cfg.a_max)},
          {"ramp", AttackPlan::ramp(cfg.ramp_slope, cfg.a_max)},
          {"none", AttackPlan::none(cfg.a_max)}};
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

SolveResult solve_policy(const RunConfig& cfg, int workers, std::ostream* log) {
  const auto start = std::chrono::steady_clock::now();
  const Loop loop(cfg);
  const Grid grid(cfg.mdp.lo, cfg.mdp.hi, cfg.mdp.step);
  const std::vector<Vec> actions = build_action_grid(loop.model.m(), cfg.a_max, cfg.mdp.actions_per_dim);
  const AttackMdp mdp{&loop.model, &loop.ss, cfg.eta, cfg.mdp.delta_rule};

  TransitionOptions topts;
  topts.workers = workers;
  topts.sampling.samples = cfg.mdp.samples;
  topts.sampling.seed = cfg.eval.seed;
  const TransitionModel tm = build_transition_model(mdp, grid, actions, topts);

  std::unique_ptr<Refinement> refine;
  if (cfg.mdp.refine) {
    refine = std::make_unique<Refinement>();
    refine->mdp = mdp;
    refine->a_max = cfg.a_max;
    refine->initial_width = cfg.mdp.actions_per_dim > 1 ? 2.0 * cfg.a_max / (cfg.mdp.actions_per_dim - 1) : cfg.a_max;
    refine->rounds = cfg.mdp.refine_rounds;
    refine->sampling = topts.sampling;
  }

  SolveResult res;
  res.policy = value_iteration(tm, grid, cfg.mdp.horizon, cfg.mdp.gamma, cfg.a_max, refine.get(), &res.stats);
  res.truncation_warnings = tm.truncation_warnings;
  res.digest = cfg.digest();
  if (log) {
    *log << "solve: states=" << res.stats.states << " actions=" << res.stats.actions << " sweeps=" << res.stats.sweeps
         << " wall_time=" << seconds_since(start) << "s\n";
    if (res.truncation_warnings > 0) {
      *log << "warning: " << res.truncation_warnings
           << " transition rows kept less than " << topts.truncation_warning_mass
           << " of their mass inside the grid; consider wider mdp.lo/mdp.hi\n";
    }
  }
  return res;
}

Policy load_policy(const std::string& path, const RunConfig& cfg) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArtifactError("policy artifact not found: " + path + " (run solve first)");
  std::string digest;
  Policy policy;
  try {
    policy = Policy::load(in, &digest);
  } catch (const std::exception& err) {
    throw ArtifactError(path + ": " + err.what());
  }
  if (digest != cfg.digest()) {
    throw ArtifactError(path + ": digest " + digest + " does not match the configuration (" + cfg.digest() + ")");
  }
  return policy;
}

SolveResult cmd_solve(const RunConfig& cfg, const CommandOptions& opts) {
  SolveResult res = solve_policy(cfg, opts.workers, opts.log);
  fs::create_directories(opts.out_dir);
  res.path = (fs::path(opts.out_dir) / "policy.txt").string();
  std::ofstream out(res.path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + res.path);
  res.policy.save(out, res.digest);
  return res;
}

std::vector<SweepRow> cmd_sweep_action(const RunConfig& cfg, const CommandOptions& opts) {
  const Loop loop(cfg);
  if (!loop.model.is_scalar()) throw std::invalid_argument("sweep-action needs a scalar model (n = m = 1)");
  const Grid grid(cfg.mdp.lo, cfg.mdp.hi, cfg.mdp.step);
  const AttackMdp mdp{&loop.model, &loop.ss, cfg.eta, cfg.mdp.delta_rule};
  const Vec e = Vec::Zero(1);
  std::vector<SweepRow> rows(static_cast<std::size_t>(cfg.sweep_points));
  parallel_for(cfg.sweep_points, opts.workers, [&](long k) {
    const double a = cfg.a_max * static_cast<double>(k) / (cfg.sweep_points - 1);
    TransitionRow row = transition_row(mdp, grid, e, Vec::Constant(1, a));
    double sum = 0.0;
    for (double p : row.probs) sum += p;
    for (double& p : row.probs) p /= sum;
    rows[static_cast<std::size_t>(k)] = {a, row.detection, expected_reward(row.probs, grid)};
  });
  CsvWriter csv(opts.out_dir, "sweep_action.csv", cfg, "a,detection_prob,expected_reward");
  for (const SweepRow& r : rows) csv.row(r.a, r.detection, r.reward);
  return rows;
}

EvaluateResult cmd_evaluate(const RunConfig& cfg, const CommandOptions& opts) {
  Policy policy = load_policy(resolve_policy_path(cfg, opts), cfg);
  const Loop loop(cfg);
  const Scenario scenario = loop.scenario(cfg, cfg.mitigation);
  EvaluateResult res;
  for (auto& [name, plan] : plan_set(cfg, std::move(policy))) {
    res.curves.push_back({name, cost_report(simulate(scenario, plan, cfg.eval.W, cfg.eval.seed, opts.workers),
                                            cfg.digest())});
  }
  for (std::size_t k = 1; k < res.curves.size(); ++k) {
    res.mdp_margin.emplace_back(res.curves[k].plan, paired_difference(res.curves[0].report, res.curves[k].report));
  }

  CsvWriter curves(opts.out_dir, "cost_curves.csv", cfg, "plan,t,cost,std_err");
  for (const PlanCurve& c : res.curves) {
    for (std::size_t t = 0; t < c.report.cost_per_t.size(); ++t) {
      curves.row(c.plan, static_cast<long>(t + 1), c.report.cost_per_t[t], c.report.std_err_per_t[t]);
    }
  }
  CsvWriter margins(opts.out_dir, "cost_margins.csv", cfg, "plan,versus,difference,std_err");
  for (const auto& [versus, diff] : res.mdp_margin) margins.row("mdp", versus, diff.mean, diff.std_error);
  return res;
}

std::vector<FpMdRow> cmd_fpmd(const RunConfig& cfg, const CommandOptions& opts) {
  std::optional<std::pair<std::string, Policy>> supplied;
  const std::string supplied_path = resolve_policy_path(cfg, opts);
  if (!cfg.policy_per_eta) {
    supplied.emplace(cfg.digest(), load_policy(supplied_path, cfg));
  } else if (fs::exists(supplied_path)) {
    std::ifstream in(supplied_path, std::ios::binary);
    std::string digest;
    try {
      Policy p = Policy::load(in, &digest);
      supplied.emplace(digest, std::move(p));
    } catch (const std::exception& err) {
      throw ArtifactError(supplied_path + ": " + err.what());
    }
  }

  std::vector<FpMdRow> rows;
  for (double eta : cfg.sweep_eta) {
    RunConfig at = cfg;
    at.eta = eta;
    std::optional<Policy> policy;
    if (!cfg.policy_per_eta) {
      policy = supplied->second;
    } else if (supplied && supplied->first == at.digest()) {
      policy = supplied->second;
    } else {
      policy = solve_policy(at, opts.workers, opts.log).policy;
    }
    const AttackPlan plan = mdp_plan(at, std::move(*policy));
    const Loop loop(at);
    for (double sigma : cfg.sweep_sigma) {
      const Scenario scenario = loop.scenario(at, MitigationStrategy::noisy(sigma));
      FpMdRow row;
      row.eta = eta;
      row.sigma_mit = sigma;
      row.fp = fp_cost(scenario, cfg.eval.W, cfg.eval.seed, opts.workers);
      row.md = md_cost(scenario, plan, cfg.eval.W, cfg.eval.seed, opts.workers);
      rows.push_back(row);
      if (opts.log) *opts.log << "fpmd: eta=" << eta << " sigma_mit=" << sigma << " fp=" << row.fp.mean
                              << " md=" << row.md.mean << '\n';
    }
  }
  CsvWriter csv(opts.out_dir, "fpmd.csv", cfg, "eta,sigma_mit,fp_cost,fp_std_err,md_cost,md_std_err");
  for (const FpMdRow& r : rows) csv.row(r.eta, r.sigma_mit, r.fp.mean, r.fp.std_error, r.md.mean, r.md.std_error);
  return rows;
}

std::vector<VoltageCurves> cmd_voltage(const RunConfig& cfg, const CommandOptions& opts) {
  if (cfg.controller.kind != Controller::Kind::Setpoint) {
    throw std::invalid_argument("voltage needs a setpoint controller (use --preset voltage)");
  }
  Policy policy = load_policy(resolve_policy_path(cfg, opts), cfg);
  const VoltageConfig vcfg = cfg.voltage();
  const Grid grid = policy.grid();
  std::vector<VoltageCurves> out;
  const Policy table = policy;
  for (auto& [name, plan] : plan_set(cfg, std::move(policy))) {
    out.push_back({name, voltage_attack_experiment(vcfg, plan, cfg.eta, cfg.mitigation, cfg.eval.T, cfg.eval.W,
                                                   cfg.eval.seed, opts.workers)});
  }

  const Eigen::Index n = vcfg.x0.size();
  std::string header = "plan,t";
  for (Eigen::Index k = 1; k <= n; ++k) header += ",mean_x_" + std::to_string(k) + ",std_err_x_" + std::to_string(k);
  for (Eigen::Index k = 1; k <= n; ++k) header += ",mean_x_hat_" + std::to_string(k);
  header += ",mean_deviation,mean_est_deviation";
  CsvWriter curves(opts.out_dir, "voltage_curves.csv", cfg, header);
  CsvWriter detection(opts.out_dir, "detection_freq.csv", cfg, "plan,t,detection_freq");
  for (const VoltageCurves& v : out) {
    const VoltageResult& r = v.result;
    for (long t = 0; t < r.mean_x.cols(); ++t) {
      std::string fields = v.plan + "," + std::to_string(t);
      for (Eigen::Index k = 0; k < n; ++k) {
        fields += "," + format_double(r.mean_x(k, t)) + "," + format_double(r.std_err_x(k, t));
      }
      for (Eigen::Index k = 0; k < n; ++k) fields += "," + format_double(r.mean_x_hat(k, t));
      fields += "," + format_double(r.mean_deviation(t)) + "," + format_double(r.mean_est_deviation(t));
      curves.row(fields);
    }
    for (Eigen::Index t = 0; t < r.detection_freq.size(); ++t) {
      detection.row(v.plan, static_cast<long>(t + 1), r.detection_freq(t));
    }
  }

  std::string table_header = "stage,state";
  for (Eigen::Index k = 1; k <= grid.dim(); ++k) table_header += ",e_" + std::to_string(k);
  for (Eigen::Index k = 1; k <= table.action_dim(); ++k) table_header += ",a_" + std::to_string(k);
  table_header += ",value";
  CsvWriter policy_csv(opts.out_dir, "policy_table.csv", cfg, table_header);
  for (int s = 1; s <= table.horizon(); ++s) {
    for (long i = 0; i < grid.size(); ++i) {
      std::string fields = std::to_string(s) + "," + std::to_string(i);
      const Vec e = grid.point(i);
      for (double x : e) fields += "," + format_double(x);
      for (double a : table.action(s, i)) fields += "," + format_double(a);
      fields += "," + format_double(table.value(s, i));
      policy_csv.row(fields);
    }
  }
  return out;
}

BEstimate cmd_estimate_b(const std::string& trace_path, const CommandOptions& opts, std::ostream& print) {
  const TraceSet traces = load_traces(trace_path);
  const BEstimate est = estimate_B(traces);
  auto print_mat = [&](const char* name, const Mat& m) {
    print << name << " (" << m.rows() << "x" << m.cols() << "):\n";
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) print << (j ? " " : "  ") << format_double(m(i, j));
      print << '\n';
    }
  };
  print << "samples: " << est.samples << '\n';
  print_mat("B", est.B);
  print_mat("residual_cov", est.residual_cov);

  auto to_json = [](const Mat& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
      rows.push_back(row);
    }
    return rows;
  };
  const nlohmann::json fragment = {{"model", {{"B", to_json(est.B)}, {"Q", to_json(est.residual_cov)}}}};
  fs::create_directories(opts.out_dir);
  std::ofstream out(fs::path(opts.out_dir) / "b_estimate.json", std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write b_estimate.json");
  out << fragment.dump(2) << '\n';
  return est;
}

}  // namespace fdi
