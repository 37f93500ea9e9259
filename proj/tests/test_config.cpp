#include "doctest.h"
#include "fdi/config.hpp"

using namespace fdi;

TEST_CASE("presets") {
  const RunConfig b = preset_config("benchmark");
  CHECK(b.R(0, 0) == 10.0);
  CHECK(b.eta == 10.0);
  CHECK(b.a_max == 20.0);
  CHECK(Grid(b.mdp.lo, b.mdp.hi, b.mdp.step).size() == 241);
  CHECK(b.eval.W == 10000);
  CHECK(b.eval.T == 10);
  const RunConfig v = preset_config("voltage");
  CHECK(v.eval.T == 30);
  CHECK(v.eta == 5.0);
  CHECK(v.controller.kind == Controller::Kind::Setpoint);
  CHECK(v.controller.x0(0) == 0.835);
  CHECK_THROWS_AS(preset_config("nope"), ConfigError);
}

TEST_CASE("overlay and validation") {
  const RunConfig b = preset_config("benchmark");
  const RunConfig c = apply_json(b, R"({"detector": {"eta": "inf"}, "mitigation": {"kind": "noisy", "sigma_mit": 15}})");
  CHECK(std::isinf(c.eta));
  CHECK(c.mitigation.kind == MitigationStrategy::Kind::Noisy);
  CHECK(c.mitigation.sigma_mit == 15.0);
  CHECK(c.R(0, 0) == 10.0);
  CHECK_THROWS_WITH_AS(apply_json(b, R"({"detector": {"etta": 1}})"), doctest::Contains("detector.etta"), ConfigError);
  CHECK_THROWS_WITH_AS(apply_json(b, R"({"model": {"R": [[0]]}})"), doctest::Contains("positive definite"), ConfigError);
  CHECK_THROWS_AS(apply_json(b, R"({"mdp": {"actions_per_dim": 80}})"), ConfigError);
  CHECK_THROWS_AS(apply_json(b, R"({"mdp": {"lo": [-1, -1]}})"), ConfigError);
  CHECK_THROWS_AS(apply_json(b, "{not json"), ConfigError);
}

TEST_CASE("round trip through JSON and digest scope") {
  const RunConfig b = preset_config("benchmark");
  const RunConfig again = apply_json(b, b.to_json());
  CHECK(again.to_json() == b.to_json());
  CHECK(again.digest() == b.digest());
  CHECK(b.digest().size() == 16);
  // Evaluation-only fields do not touch the digest; model and threshold do.
  CHECK(apply_json(b, R"({"eval": {"W": 5}})").digest() == b.digest());
  CHECK(apply_json(b, R"({"mitigation": {"kind": "noisy", "sigma_mit": 5}})").digest() == b.digest());
  CHECK(apply_json(b, R"({"detector": {"eta": 5}})").digest() != b.digest());
  CHECK(apply_json(b, R"({"model": {"Q": [[2]]}})").digest() != b.digest());
  CHECK(apply_json(b, R"({"mdp": {"step": [0.5]}})").digest() != b.digest());
}
