#include <memory>
#include <random>

#include "doctest.h"
#include "fdi/attack.hpp"

using namespace fdi;

namespace {

Vec v1(double v) { return Vec::Constant(1, v); }

std::shared_ptr<const Policy> small_policy() {
  const Grid grid(v1(-1), v1(1), v1(1));
  std::vector<Vec> actions = {v1(-2), v1(0), v1(2)};
  auto p = std::make_shared<Policy>(grid, actions, 2, 1.0, 2.0);
  for (int s = 1; s <= 2; ++s) {
    p->set(s, 0, v1(2.0 * s / 2.0), 1.0);   // e = -1
    p->set(s, 1, v1(0), 0.0);               // e = 0
    p->set(s, 2, v1(-2.0 * s / 2.0), 1.0);  // e = 1
  }
  return p;
}

}  // namespace

TEST_CASE("constant, ramp and none plans") {
  CHECK(attack_at(AttackPlan::ramp(v1(1)), 7, v1(0), 1, 1)(0) == 7.0);
  CHECK(attack_at(AttackPlan::constant(v1(10)), 3, v1(0), 1, 1)(0) == 10.0);
  CHECK(attack_at(AttackPlan::constant(v1(10)), 99, v1(0), 1, 1)(0) == 10.0);
  CHECK(attack_at(AttackPlan::ramp(v1(1), 20), 25, v1(0), 1, 1)(0) == 20.0);
  CHECK(attack_at(AttackPlan::none(), 4, v1(0), 1, 3).size() == 3);
  CHECK(attack_at(AttackPlan::none(), 4, v1(0), 1, 3).isZero());
  CHECK_THROWS_AS(attack_at(AttackPlan::ramp(v1(1)), 0, v1(0), 1, 1), std::invalid_argument);
  CHECK_THROWS_AS(AttackPlan::none(0.0), std::invalid_argument);
}

TEST_CASE("radial clipping keeps direction") {
  const Vec a = (Vec(2) << 30.0, 40.0).finished();
  const Vec c = clip_to_ball(a, 10.0);
  CHECK(c.norm() == doctest::Approx(10.0));
  CHECK(c(0) / c(1) == doctest::Approx(0.75));
}

TEST_CASE("policy plans look up the stage") {
  const auto policy = small_policy();
  const AttackPlan plan = AttackPlan::mdp(policy, 5.0);
  CHECK(attack_at(plan, 1, v1(-0.9), 2, 1)(0) == 2.0);
  CHECK(attack_at(plan, 2, v1(-0.9), 1, 1)(0) == 1.0);
  CHECK(attack_at(plan, 1, v1(0.5), 2, 1)(0) == 0.0);  // midpoint goes to the lower index
  CHECK(attack_at(plan, 1, v1(40), 2, 1)(0) == -2.0);
  CHECK(attack_at(plan, 1, v1(-0.9), 7, 1)(0) == 2.0);  // stages beyond the horizon clamp
  const AttackPlan stationary = AttackPlan::mdp(policy, 5.0, StageConvention::Stationary);
  CHECK(attack_at(stationary, 5, v1(-0.9), 1, 1)(0) == 2.0);
  const AttackPlan tight = AttackPlan::mdp(policy, 0.5);
  CHECK(attack_at(tight, 1, v1(-0.9), 2, 1)(0) == 0.5);
  CHECK_THROWS_AS(attack_at(plan, 1, v1(0), 1, 2), std::invalid_argument);
  CHECK_THROWS_AS(attack_at(plan, 1, Vec::Zero(2), 1, 1), std::invalid_argument);
}

TEST_CASE("property: every emitted attack respects a_max") {
  std::mt19937_64 rng(123);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  std::uniform_real_distribution<double> bound(0.1, 30.0);
  const auto policy = small_policy();
  for (int k = 0; k < 2000; ++k) {
    const double a_max = bound(rng);
    const Vec c = (Vec(2) << u(rng), u(rng)).finished();
    const long t = 1 + static_cast<long>(std::abs(u(rng)));
    CHECK(attack_at(AttackPlan::constant(c, a_max), t, Vec::Zero(2), 1, 2).norm() <= a_max * (1 + 1e-12));
    CHECK(attack_at(AttackPlan::ramp(c, a_max), t, Vec::Zero(2), 1, 2).norm() <= a_max * (1 + 1e-12));
    CHECK(std::abs(attack_at(AttackPlan::mdp(policy, a_max), t, v1(u(rng)), 1 + k % 3, 1)(0)) <= a_max * (1 + 1e-12));
  }
}
