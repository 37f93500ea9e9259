#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "fdi/commands.hpp"

using namespace fdi;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("fdisim_test_" + name);
  fs::remove_all(dir);
  return dir;
}

RunConfig small() {
  return apply_json(preset_config("benchmark"),
                    R"({"mdp": {"lo": [-10], "hi": [10], "step": [0.5], "actions_per_dim": 21, "horizon": 4},
                        "eval": {"W": 300, "T": 4}, "sweep": {"eta": [0, 5], "sigma_mit": [0, 15], "action_points": 11}})");
}

}  // namespace

TEST_CASE("every command is byte-for-byte reproducible") {
  const RunConfig cfg = small();
  std::vector<std::string> first;
  for (int pass = 0; pass < 2; ++pass) {
    const fs::path dir = scratch("repro" + std::to_string(pass));
    CommandOptions o;
    o.out_dir = dir.string();
    o.workers = pass + 1;  // worker count must not matter
    cmd_solve(cfg, o);
    cmd_sweep_action(cfg, o);
    cmd_evaluate(cfg, o);
    cmd_fpmd(cfg, o);
    std::vector<std::string> files;
    for (const char* f : {"policy.txt", "sweep_action.csv", "cost_curves.csv", "cost_margins.csv", "fpmd.csv"}) {
      files.push_back(slurp(dir / f));
      CHECK(!files.back().empty());
    }
    if (pass == 0) {
      first = files;
    } else {
      CHECK(files == first);
    }
  }
  CHECK(first[1].rfind("# digest=" + cfg.digest() + " seed=1\na,detection_prob,expected_reward\n", 0) == 0);
}

TEST_CASE("degenerate single-point grid solves to zero values") {
  const RunConfig cfg = apply_json(small(), R"({"mdp": {"lo": [0], "hi": [0]}})");
  CommandOptions o;
  o.out_dir = scratch("zero").string();
  const SolveResult r = cmd_solve(cfg, o);
  CHECK(r.stats.states == 1);
  for (int s = 0; s <= r.policy.horizon(); ++s) CHECK(r.policy.value(s, 0) == 0.0);
}

TEST_CASE("policy artifacts are checked against the config") {
  const RunConfig cfg = small();
  CommandOptions o;
  o.out_dir = scratch("digest").string();
  CHECK_THROWS_AS(cmd_evaluate(cfg, o), ArtifactError);  // nothing solved yet
  cmd_solve(cfg, o);
  const RunConfig other = apply_json(cfg, R"({"detector": {"eta": 3}})");
  CHECK_THROWS_AS(cmd_evaluate(other, o), ArtifactError);
  CHECK_NOTHROW(cmd_evaluate(apply_json(cfg, R"({"eval": {"W": 50}})"), o));
  CHECK_THROWS_AS(cmd_voltage(cfg, o), std::invalid_argument);
}

TEST_CASE("voltage command writes its tables") {
  const RunConfig cfg = apply_json(preset_config("voltage"),
                                   R"({"mdp": {"lo": [-0.1], "hi": [0.1], "step": [0.01], "actions_per_dim": 11, "horizon": 5},
                                       "eval": {"W": 50, "T": 5}})");
  CommandOptions o;
  o.out_dir = scratch("voltage").string();
  cmd_solve(cfg, o);
  const auto curves = cmd_voltage(cfg, o);
  CHECK(curves.size() == 4);
  CHECK(slurp(fs::path(o.out_dir) / "policy_table.csv").find("stage,state,e_1,a_1,value") != std::string::npos);
  CHECK(curves[0].result.detection_freq.size() == 5);
}

TEST_CASE("sweep-action rejects non-scalar models") {
  RunConfig cfg = small();
  cfg.A = Mat::Identity(2, 2);
  cfg.B = Mat::Identity(2, 2);
  cfg.C = Mat::Identity(2, 2);
  cfg.Q = Mat::Identity(2, 2);
  cfg.R = Mat::Identity(2, 2);
  cfg.X0 = Mat::Zero(2, 2);
  CommandOptions o;
  o.out_dir = scratch("nonscalar").string();
  CHECK_THROWS_AS(cmd_sweep_action(cfg, o), std::invalid_argument);
}

TEST_CASE("estimate-b from a trace file") {
  const fs::path dir = scratch("traces");
  fs::create_directories(dir);
  const TraceSet t = synthetic_traces(Mat::Constant(1, 1, 0.7), Mat::Zero(1, 1), Vec::Ones(1), 40, 0.1, 5);
  {
    std::ofstream out(dir / "t.csv");
    write_traces(out, t);
  }
  CommandOptions o;
  o.out_dir = dir.string();
  std::stringstream printed;
  const BEstimate est = cmd_estimate_b((dir / "t.csv").string(), o, printed);
  CHECK(std::abs(est.B(0, 0) - 0.7) < 1e-8);
  CHECK(printed.str().find("B (1x1)") != std::string::npos);
  const RunConfig merged = load_config((dir / "b_estimate.json").string(), preset_config("voltage"));
  CHECK(std::abs(merged.B(0, 0) - 0.7) < 1e-8);

  {
    std::ofstream out(dir / "flat.csv");
    out << "t,x_1,u_1\n0,1,0\n1,1,0\n2,1,0\n";
  }
  CHECK_THROWS_AS(cmd_estimate_b((dir / "flat.csv").string(), o, printed), RankDeficientError);
}
