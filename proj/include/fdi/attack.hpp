#pragma once

#include <memory>

#include "fdi/mdp.hpp"

namespace fdi {

/// How a rollout at wall-clock step t picks the policy stage.
enum class StageConvention {
  StagesToGo,  // stage T - t + 1
  Stationary,  // always the policy's longest-horizon stage
};

struct AttackPlan {
  enum class Kind { None, Constant, Ramp, MdpPolicy };
  Kind kind = Kind::None;
  Vec value;  // constant level or ramp slope
  std::shared_ptr<const Policy> policy;
  double a_max = 20.0;
  StageConvention convention = StageConvention::StagesToGo;

  static AttackPlan none(double a_max = 20.0);
  static AttackPlan constant(Vec c, double a_max = 20.0);
  static AttackPlan ramp(Vec slope, double a_max = 20.0);
  static AttackPlan mdp(std::shared_ptr<const Policy> policy, double a_max,
                        StageConvention convention = StageConvention::StagesToGo);
};

/// Radial projection onto the ball of radius a_max.
Vec clip_to_ball(const Vec& a, double a_max);

/// Injection for step t >= 1. e_attacker is the error before the step and
/// stage_remaining the number of steps still to go (T - t + 1). m is the
/// measurement dimension, used for the None plan.
Vec attack_at(const AttackPlan& plan, long t, const Vec& e_attacker, int stage_remaining, Eigen::Index m);

}  // namespace fdi
