#pragma once

#include <string>
#include <vector>

#include "fdi/attack.hpp"
#include "fdi/defense.hpp"
#include "fdi/voltage.hpp"

namespace fdi {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct MdpSettings {
  Vec lo, hi, step;
  int actions_per_dim = 81;
  bool refine = false;
  int refine_rounds = 4;
  int horizon = 10;
  double gamma = 1.0;
  DeltaRule delta_rule = DeltaRule::Perfect;
  long samples = 100'000;  // per row, sampling path only
};

struct EvalSettings {
  long W = 10'000;
  std::uint64_t seed = 1;
  long T = 10;
  Vec x_hat0;
};

/// All experiment parameters. Parsed from JSON layered over a preset.
struct RunConfig {
  std::string preset;
  Mat A, B, C, Q, R, X0;
  double eta = 10.0;
  MitigationStrategy mitigation;
  double a_max = 20.0;
  Vec constant;
  Vec ramp_slope;
  StageConvention convention = StageConvention::StagesToGo;
  MdpSettings mdp;
  EvalSettings eval;
  Controller controller;
  std::vector<double> sweep_eta;
  std::vector<double> sweep_sigma;
  int sweep_points = 81;
  /// fpmd: re-solve the attacker's policy at every swept eta instead of
  /// reusing the policy solved for `eta`.
  bool policy_per_eta = false;
  std::string policy_path;
  std::string traces_path;
  std::string out_dir = "out";
  int workers = 1;

  SystemModel model() const;
  VoltageConfig voltage() const;
  /// Hex digest over the model, detector threshold and MDP settings.
  std::string digest() const;
  /// Canonical JSON text, including every defaulted field.
  std::string to_json() const;
};

std::vector<std::string> preset_names();

/// Throws ConfigError for an unknown name.
RunConfig preset_config(const std::string& name);

/// Overlays JSON text on the given base. Unknown keys and type mismatches
/// raise ConfigError naming the offending key path.
RunConfig apply_json(const RunConfig& base, const std::string& json_text);

RunConfig load_config(const std::string& path, const RunConfig& base);

}  // namespace fdi
