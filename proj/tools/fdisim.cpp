#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "fdi/commands.hpp"

namespace {

struct Common {
  std::string config;
  std::string preset = "benchmark";
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::string out;
  std::string policy;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "JSON config layered over the preset");
  sub->add_option("--preset", c.preset, "benchmark or voltage")->capture_default_str();
  sub->add_option("--seed", c.seed, "base seed (overrides eval.seed)");
  sub->add_option("--workers", c.workers, "worker threads (overrides workers)");
  sub->add_option("--out", c.out, "output directory (overrides paths.out)");
  sub->add_option("--policy", c.policy, "policy artifact (overrides paths.policy)");
}

fdi::RunConfig resolve(const Common& c) {
  fdi::RunConfig cfg = fdi::preset_config(c.preset);
  if (!c.config.empty()) cfg = fdi::load_config(c.config, cfg);
  if (c.seed) cfg.eval.seed = *c.seed;
  if (c.workers) cfg.workers = *c.workers;
  if (!c.out.empty()) cfg.out_dir = c.out;
  return cfg;
}

fdi::CommandOptions options(const fdi::RunConfig& cfg, const Common& c) {
  fdi::CommandOptions o;
  o.out_dir = cfg.out_dir;
  o.workers = cfg.workers;
  o.policy_path = c.policy;
  o.log = &std::cerr;
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FDI attack simulator: optimal attacks against a chi-square detected, mitigated Kalman loop"};
  app.require_subcommand(1);

  Common common;
  auto* solve = app.add_subcommand("solve", "solve the attacker's MDP and write policy.txt");
  auto* sweep = app.add_subcommand("sweep-action", "detection probability and expected reward versus attack size");
  auto* evaluate = app.add_subcommand("evaluate", "Monte-Carlo cost curves for MDP, constant, ramp and no attack");
  auto* fpmd = app.add_subcommand("fpmd", "false-positive and misdetection costs over eta x sigma_mit");
  auto* voltage = app.add_subcommand("voltage", "voltage-control case: bus voltage and detection curves");
  auto* estimate = app.add_subcommand("estimate-b", "least-squares control matrix from a trace CSV");
  for (auto* sub : {solve, sweep, evaluate, fpmd, voltage}) add_common(sub, common);

  std::string trace_path;
  std::string estimate_out = "out";
  estimate->add_option("traces", trace_path, "trace CSV (t,x_1..x_n,u_1..u_p)")->required();
  estimate->add_option("--out", estimate_out, "output directory")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (estimate->parsed()) {
      fdi::CommandOptions o;
      o.out_dir = estimate_out;
      fdi::cmd_estimate_b(trace_path, o, std::cout);
      return 0;
    }
    const fdi::RunConfig cfg = resolve(common);
    const fdi::CommandOptions o = options(cfg, common);
    if (solve->parsed()) {
      const auto res = fdi::cmd_solve(cfg, o);
      std::cout << "wrote " << res.path << " (states=" << res.stats.states << ", actions=" << res.stats.actions
                << ", stages=" << res.policy.horizon() << ", digest=" << res.digest << ")\n";
    } else if (sweep->parsed()) {
      fdi::cmd_sweep_action(cfg, o);
      std::cout << "wrote " << cfg.out_dir << "/sweep_action.csv\n";
    } else if (evaluate->parsed()) {
      const auto res = fdi::cmd_evaluate(cfg, o);
      for (const auto& [versus, d] : res.mdp_margin) {
        std::cout << "mdp - " << versus << " at T: " << d.mean << " (std err " << d.std_error << ")\n";
      }
      std::cout << "wrote " << cfg.out_dir << "/cost_curves.csv\n";
    } else if (fpmd->parsed()) {
      fdi::cmd_fpmd(cfg, o);
      std::cout << "wrote " << cfg.out_dir << "/fpmd.csv\n";
    } else if (voltage->parsed()) {
      fdi::cmd_voltage(cfg, o);
      std::cout << "wrote " << cfg.out_dir << "/voltage_curves.csv\n";
    }
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 1;
  }
  return 0;
}
