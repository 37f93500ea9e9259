#include "fdi/attack.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fdi {

namespace {

void require_bound(double a_max) {
  if (!(a_max > 0.0)) throw std::invalid_argument("AttackPlan: a_max must be positive");
}

}  // namespace

AttackPlan AttackPlan::none(double a_max) {
  require_bound(a_max);
  AttackPlan p;
  p.a_max = a_max;
  return p;
}

AttackPlan AttackPlan::constant(Vec c, double a_max) {
  require_bound(a_max);
  AttackPlan p;
  p.kind = Kind::Constant;
  p.value = std::move(c);
  p.a_max = a_max;
  return p;
}

AttackPlan AttackPlan::ramp(Vec slope, double a_max) {
  require_bound(a_max);
  AttackPlan p;
  p.kind = Kind::Ramp;
  p.value = std::move(slope);
  p.a_max = a_max;
  return p;
}

AttackPlan AttackPlan::mdp(std::shared_ptr<const Policy> policy, double a_max, StageConvention convention) {
  require_bound(a_max);
  if (!policy) throw std::invalid_argument("AttackPlan: null policy");
  AttackPlan p;
  p.kind = Kind::MdpPolicy;
  p.policy = std::move(policy);
  p.a_max = a_max;
  p.convention = convention;
  return p;
}

Vec clip_to_ball(const Vec& a, double a_max) {
  const double norm = a.norm();
  if (norm <= a_max) return a;
  return a * (a_max / norm);
}

Vec attack_at(const AttackPlan& plan, long t, const Vec& e_attacker, int stage_remaining, Eigen::Index m) {
  if (t < 1) throw std::invalid_argument("attack_at: t must be >= 1");
  switch (plan.kind) {
    case AttackPlan::Kind::None:
      return Vec::Zero(m);
    case AttackPlan::Kind::Constant:
      if (plan.value.size() != m) throw std::invalid_argument("attack_at: constant has wrong dimension");
      return clip_to_ball(plan.value, plan.a_max);
    case AttackPlan::Kind::Ramp:
      if (plan.value.size() != m) throw std::invalid_argument("attack_at: ramp slope has wrong dimension");
      return clip_to_ball(static_cast<double>(t) * plan.value, plan.a_max);
    case AttackPlan::Kind::MdpPolicy: {
      const Policy& policy = *plan.policy;
      if (policy.action_dim() != m || policy.grid().dim() != e_attacker.size()) {
        throw std::invalid_argument("attack_at: policy dimensions do not match the model");
      }
      const int stage = plan.convention == StageConvention::Stationary
                            ? policy.horizon()
                            : std::clamp(stage_remaining, 1, policy.horizon());
      return clip_to_ball(policy_lookup(policy, stage, e_attacker), plan.a_max);
    }
  }
  return Vec::Zero(m);
}

}  // namespace fdi
