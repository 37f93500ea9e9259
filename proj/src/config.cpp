#include "fdi/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "fdi/io.hpp"

namespace fdi {

using nlohmann::json;

namespace {

json mat_json(const Mat& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

json vec_json(const Vec& v) {
  json out = json::array();
  for (double x : v) out.push_back(x);
  return out;
}

json real_json(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

double as_real(const json& j, const std::string& path) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
  }
  throw ConfigError(path + ": expected a number");
}

Vec as_vec(const json& j, const std::string& path) {
  if (j.is_number()) return Vec::Constant(1, j.get<double>());
  if (!j.is_array()) throw ConfigError(path + ": expected an array of numbers");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t k = 0; k < j.size(); ++k) v(static_cast<Eigen::Index>(k)) = as_real(j[k], path);
  return v;
}

Mat as_mat(const json& j, const std::string& path) {
  if (j.is_number()) return Mat::Constant(1, 1, j.get<double>());
  if (!j.is_array() || j.empty()) throw ConfigError(path + ": expected a nested array");
  const std::size_t cols = j[0].is_array() ? j[0].size() : 0;
  if (cols == 0) throw ConfigError(path + ": expected a nested array");
  Mat m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < j.size(); ++r) {
    if (!j[r].is_array() || j[r].size() != cols) throw ConfigError(path + ": ragged matrix");
    for (std::size_t c = 0; c < cols; ++c) {
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = as_real(j[r][c], path);
    }
  }
  return m;
}

std::vector<double> as_list(const json& j, const std::string& path) {
  const Vec v = as_vec(j, path);
  return {v.data(), v.data() + v.size()};
}

template <typename T>
T as(const json& j, const std::string& path) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw ConfigError(path + ": wrong type");
  }
}

// Recursively overlays patch onto base; every patch key must already exist.
void overlay(json& base, const json& patch, const std::string& path) {
  if (!patch.is_object()) throw ConfigError((path.empty() ? "config" : path) + ": expected an object");
  for (const auto& [key, value] : patch.items()) {
    const std::string here = path.empty() ? key : path + "." + key;
    if (!base.contains(key)) throw ConfigError("unknown key '" + here + "'");
    if (base[key].is_object()) {
      overlay(base[key], value, here);
    } else {
      base[key] = value;
    }
  }
}

const char* mitigation_name(MitigationStrategy::Kind k) {
  switch (k) {
    case MitigationStrategy::Kind::Perfect: return "perfect";
    case MitigationStrategy::Kind::Noisy: return "noisy";
    case MitigationStrategy::Kind::Off: return "off";
  }
  return "perfect";
}

json config_json(const RunConfig& c) {
  json j;
  j["preset"] = c.preset;
  j["model"] = {{"A", mat_json(c.A)}, {"B", mat_json(c.B)}, {"C", mat_json(c.C)},
                {"Q", mat_json(c.Q)}, {"R", mat_json(c.R)}, {"X0", mat_json(c.X0)}};
  j["detector"] = {{"eta", real_json(c.eta)}};
  j["mitigation"] = {{"kind", mitigation_name(c.mitigation.kind)}, {"sigma_mit", c.mitigation.sigma_mit}};
  j["attack"] = {{"a_max", c.a_max},
                 {"constant", vec_json(c.constant)},
                 {"ramp_slope", vec_json(c.ramp_slope)},
                 {"stage_convention", c.convention == StageConvention::StagesToGo ? "stages_to_go" : "stationary"}};
  j["mdp"] = {{"lo", vec_json(c.mdp.lo)},
              {"hi", vec_json(c.mdp.hi)},
              {"step", vec_json(c.mdp.step)},
              {"actions_per_dim", c.mdp.actions_per_dim},
              {"refine", c.mdp.refine},
              {"refine_rounds", c.mdp.refine_rounds},
              {"horizon", c.mdp.horizon},
              {"gamma", c.mdp.gamma},
              {"delta_rule", c.mdp.delta_rule == DeltaRule::Perfect ? "perfect" : "off"},
              {"samples", c.mdp.samples}};
  j["eval"] = {{"W", c.eval.W}, {"seed", c.eval.seed}, {"T", c.eval.T}, {"x_hat0", vec_json(c.eval.x_hat0)}};
  j["controller"] = {{"kind", c.controller.kind == Controller::Kind::Zero ? "zero" : "setpoint"},
                     {"x0", vec_json(c.controller.x0)},
                     {"alpha", c.controller.alpha}};
  json etas = json::array();
  for (double e : c.sweep_eta) etas.push_back(real_json(e));
  j["sweep"] = {{"eta", etas}, {"sigma_mit", c.sweep_sigma}, {"action_points", c.sweep_points}, {"policy_per_eta", c.policy_per_eta}};
  j["paths"] = {{"policy", c.policy_path}, {"traces", c.traces_path}, {"out", c.out_dir}};
  j["workers"] = c.workers;
  return j;
}

RunConfig config_from(const json& j) {
  RunConfig c;
  c.preset = as<std::string>(j["preset"], "preset");
  const json& m = j["model"];
  c.A = as_mat(m["A"], "model.A");
  c.B = as_mat(m["B"], "model.B");
  c.C = as_mat(m["C"], "model.C");
  c.Q = as_mat(m["Q"], "model.Q");
  c.R = as_mat(m["R"], "model.R");
  c.X0 = as_mat(m["X0"], "model.X0");
  c.eta = as_real(j["detector"]["eta"], "detector.eta");
  if (std::isnan(c.eta) || c.eta < 0.0) throw ConfigError("detector.eta: must be >= 0");

  const auto kind = as<std::string>(j["mitigation"]["kind"], "mitigation.kind");
  const double sigma = as_real(j["mitigation"]["sigma_mit"], "mitigation.sigma_mit");
  if (kind == "perfect") {
    c.mitigation = MitigationStrategy::perfect();
  } else if (kind == "noisy") {
    try {
      c.mitigation = MitigationStrategy::noisy(sigma);
    } catch (const std::invalid_argument& err) {
      throw ConfigError(std::string("mitigation.sigma_mit: ") + err.what());
    }
  } else if (kind == "off") {
    c.mitigation = MitigationStrategy::off();
  } else {
    throw ConfigError("mitigation.kind: expected perfect, noisy or off");
  }

  const json& a = j["attack"];
  c.a_max = as_real(a["a_max"], "attack.a_max");
  if (!(c.a_max > 0.0) || std::isinf(c.a_max)) throw ConfigError("attack.a_max: must be positive and finite");
  c.constant = as_vec(a["constant"], "attack.constant");
  c.ramp_slope = as_vec(a["ramp_slope"], "attack.ramp_slope");
  const auto conv = as<std::string>(a["stage_convention"], "attack.stage_convention");
  if (conv == "stages_to_go") {
    c.convention = StageConvention::StagesToGo;
  } else if (conv == "stationary") {
    c.convention = StageConvention::Stationary;
  } else {
    throw ConfigError("attack.stage_convention: expected stages_to_go or stationary");
  }

  const json& d = j["mdp"];
  c.mdp.lo = as_vec(d["lo"], "mdp.lo");
  c.mdp.hi = as_vec(d["hi"], "mdp.hi");
  c.mdp.step = as_vec(d["step"], "mdp.step");
  c.mdp.actions_per_dim = as<int>(d["actions_per_dim"], "mdp.actions_per_dim");
  c.mdp.refine = as<bool>(d["refine"], "mdp.refine");
  c.mdp.refine_rounds = as<int>(d["refine_rounds"], "mdp.refine_rounds");
  c.mdp.horizon = as<int>(d["horizon"], "mdp.horizon");
  c.mdp.gamma = as_real(d["gamma"], "mdp.gamma");
  const auto rule = as<std::string>(d["delta_rule"], "mdp.delta_rule");
  if (rule != "perfect" && rule != "off") throw ConfigError("mdp.delta_rule: expected perfect or off");
  c.mdp.delta_rule = rule == "perfect" ? DeltaRule::Perfect : DeltaRule::Off;
  c.mdp.samples = as<long>(d["samples"], "mdp.samples");
  if (c.mdp.horizon < 1) throw ConfigError("mdp.horizon: must be >= 1");
  if (!(c.mdp.gamma > 0.0 && c.mdp.gamma <= 1.0)) throw ConfigError("mdp.gamma: must lie in (0, 1]");
  if (c.mdp.actions_per_dim < 1 || c.mdp.actions_per_dim % 2 == 0) {
    throw ConfigError("mdp.actions_per_dim: must be odd");
  }
  if (c.mdp.samples < 1) throw ConfigError("mdp.samples: must be positive");

  const json& e = j["eval"];
  c.eval.W = as<long>(e["W"], "eval.W");
  c.eval.seed = as<std::uint64_t>(e["seed"], "eval.seed");
  c.eval.T = as<long>(e["T"], "eval.T");
  c.eval.x_hat0 = as_vec(e["x_hat0"], "eval.x_hat0");
  if (c.eval.W < 1) throw ConfigError("eval.W: must be >= 1");
  if (c.eval.T < 1) throw ConfigError("eval.T: must be >= 1");

  const json& k = j["controller"];
  const auto ckind = as<std::string>(k["kind"], "controller.kind");
  const Vec x0 = as_vec(k["x0"], "controller.x0");
  const double alpha = as_real(k["alpha"], "controller.alpha");
  if (ckind == "zero") {
    c.controller = Controller::zero();
    c.controller.x0 = x0;
    c.controller.alpha = alpha;
  } else if (ckind == "setpoint") {
    try {
      c.controller = Controller::setpoint(x0, alpha);
    } catch (const std::invalid_argument& err) {
      throw ConfigError(std::string("controller: ") + err.what());
    }
  } else {
    throw ConfigError("controller.kind: expected zero or setpoint");
  }

  c.sweep_eta = as_list(j["sweep"]["eta"], "sweep.eta");
  c.sweep_sigma = as_list(j["sweep"]["sigma_mit"], "sweep.sigma_mit");
  c.sweep_points = as<int>(j["sweep"]["action_points"], "sweep.action_points");
  c.policy_per_eta = as<bool>(j["sweep"]["policy_per_eta"], "sweep.policy_per_eta");
  if (c.sweep_points < 2) throw ConfigError("sweep.action_points: must be >= 2");
  c.policy_path = as<std::string>(j["paths"]["policy"], "paths.policy");
  c.traces_path = as<std::string>(j["paths"]["traces"], "paths.traces");
  c.out_dir = as<std::string>(j["paths"]["out"], "paths.out");
  c.workers = as<int>(j["workers"], "workers");
  if (c.workers < 1) throw ConfigError("workers: must be >= 1");

  // Cross-field checks that need the model dimensions.
  try {
    const SystemModel model = c.model();
    const Eigen::Index n = model.n();
    if (c.mdp.lo.size() != n || c.mdp.hi.size() != n || c.mdp.step.size() != n) {
      throw ConfigError("mdp.lo/hi/step: must have the state dimension");
    }
    if (c.constant.size() != model.m() || c.ramp_slope.size() != model.m()) {
      throw ConfigError("attack.constant/ramp_slope: must have the measurement dimension");
    }
    if (c.eval.x_hat0.size() != n) throw ConfigError("eval.x_hat0: must have the state dimension");
    Grid(c.mdp.lo, c.mdp.hi, c.mdp.step);
  } catch (const std::invalid_argument& err) {
    throw ConfigError(err.what());
  }
  return c;
}

RunConfig benchmark_preset() {
  RunConfig c;
  c.preset = "benchmark";
  c.A = Mat::Constant(1, 1, 1.0);
  c.B = Mat::Constant(1, 1, 1.0);
  c.C = Mat::Constant(1, 1, 1.0);
  c.Q = Mat::Constant(1, 1, 1.0);
  c.R = Mat::Constant(1, 1, 10.0);
  c.X0 = Mat::Zero(1, 1);
  c.eta = 10.0;
  c.mitigation = MitigationStrategy::perfect();
  c.a_max = 20.0;
  c.constant = Vec::Constant(1, 10.0);
  c.ramp_slope = Vec::Constant(1, 1.0);
  c.mdp.lo = Vec::Constant(1, -30.0);
  c.mdp.hi = Vec::Constant(1, 30.0);
  c.mdp.step = Vec::Constant(1, 0.25);
  c.mdp.horizon = 10;
  c.eval.W = 10'000;
  c.eval.T = 10;
  c.eval.x_hat0 = Vec::Zero(1);
  c.controller = Controller::zero();
  c.controller.x0 = Vec::Zero(1);
  c.sweep_eta = {0.0, 1.0, 2.5, 5.0};
  c.sweep_sigma = {0.0, 5.0, 10.0, 15.0};
  return c;
}

// The benchmark scaled by 0.01 in standard deviation, around a 0.835 pu setpoint.
RunConfig voltage_preset() {
  RunConfig c = benchmark_preset();
  c.preset = "voltage";
  c.Q = Mat::Constant(1, 1, 1e-4);
  c.R = Mat::Constant(1, 1, 1e-3);
  c.eta = 5.0;
  c.a_max = 0.2;
  c.constant = Vec::Constant(1, 0.1);
  c.ramp_slope = Vec::Constant(1, 0.01);
  c.mdp.lo = Vec::Constant(1, -0.3);
  c.mdp.hi = Vec::Constant(1, 0.3);
  c.mdp.step = Vec::Constant(1, 0.0025);
  c.mdp.horizon = 30;
  c.eval.T = 30;
  c.eval.x_hat0 = Vec::Constant(1, 1.0);
  c.controller = Controller::setpoint(Vec::Constant(1, 0.835), 0.5);
  c.sweep_eta = {5.0};
  c.sweep_sigma = {0.0};
  return c;
}

}  // namespace

SystemModel RunConfig::model() const { return SystemModel(A, B, C, Q, R, X0); }

VoltageConfig RunConfig::voltage() const {
  VoltageConfig v;
  v.x0 = controller.x0;
  v.x_start = eval.x_hat0;
  v.alpha = controller.alpha;
  v.B = B;
  v.Q = Q;
  v.R = R;
  v.X0 = X0;
  return v;
}

std::string RunConfig::digest() const {
  const json j = config_json(*this);
  const json scope = {{"model", j["model"]}, {"eta", j["detector"]["eta"]}, {"mdp", j["mdp"]},
                      {"a_max", j["attack"]["a_max"]}};
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a(scope.dump())));
  return buf;
}

std::string RunConfig::to_json() const { return config_json(*this).dump(2); }

std::vector<std::string> preset_names() { return {"benchmark", "voltage"}; }

RunConfig preset_config(const std::string& name) {
  if (name == "benchmark") return benchmark_preset();
  if (name == "voltage") return voltage_preset();
  throw ConfigError("unknown preset '" + name + "'");
}

RunConfig apply_json(const RunConfig& base, const std::string& json_text) {
  json patch;
  try {
    patch = json::parse(json_text);
  } catch (const json::parse_error& err) {
    throw ConfigError(std::string("malformed JSON: ") + err.what());
  }
  json merged = config_json(base);
  overlay(merged, patch, "");
  return config_from(merged);
}

RunConfig load_config(const std::string& path, const RunConfig& base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return apply_json(base, ss.str());
  } catch (const ConfigError& err) {
    throw ConfigError(path + ": " + err.what());
  }
}

}  // namespace fdi
