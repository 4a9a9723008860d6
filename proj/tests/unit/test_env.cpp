#include "millforge/env.hpp"
#include "millforge/policy.hpp"

#include "doctest.h"

#include <cmath>

using namespace millforge;

namespace {

EnvConfig short_env() {
  EnvConfig c;
  c.path_length_mm = 40.0;
  c.fixed_material = MaterialParams{Vec3(700, 800, 0.03), Vec3(8, 0.5, -0.01)};
  SurfaceSpec s;
  s.family = SurfaceFamily::sinusoidal;
  s.amplitude_mm = 1.0;
  s.wavelength_mm = 30.0;
  s.base_height_mm = 10.0;
  c.fixed_surface = s;
  return c;
}

RewardBreakdown run(MillingEnv& env, std::uint64_t seed) {
  auto pol = baseline_policy(env.config());
  VecX obs = env.reset(seed);
  pol->reset();
  while (!env.done()) obs = env.step(pol->act(obs)).observation;
  return env.episode_reward();
}

}  // namespace

TEST_CASE("stepping requires an active episode and a 5-vector") {
  MillingEnv env(short_env());
  CHECK_THROWS_AS(env.step(VecX::Zero(5)), EpisodeFinished);
  env.reset(1);
  CHECK_THROWS_AS(env.step(VecX::Zero(4)), DimensionMismatch);
  VecX bad = VecX::Zero(5);
  bad[0] = std::nan("");
  CHECK_THROWS_AS(env.step(bad), InvalidArgument);
  env.close();
  CHECK_THROWS_AS(env.step(VecX::Zero(5)), EpisodeFinished);
}

TEST_CASE("observation sizes follow the layout options") {
  CHECK(ObsLayout::make(false, false).size == 15);
  CHECK(ObsLayout::make(true, false).size == 17);
  CHECK(ObsLayout::make(true, true).size == 25);
  for (bool aug : {false, true}) {
    EnvConfig c = short_env();
    c.augmented_observation = aug;
    MillingEnv env(c);
    const VecX o = env.reset(3);
    CHECK(o.size() == env.observation_dim());
    CHECK(static_cast<int>(env.layout().names().size()) == env.observation_dim());
    CHECK(o.allFinite());
  }
}

TEST_CASE("episodes are deterministic for a seed") {
  EnvConfig c = short_env();
  c.fixed_material.reset();
  c.fixed_surface.reset();
  MillingEnv a(c), b(c);
  const RewardBreakdown ra = run(a, 17), rb = run(b, 17);
  CHECK(ra.total == rb.total);
  CHECK(a.workpiece().hash() == b.workpiece().hash());
  const RewardBreakdown rc = run(a, 18);
  CHECK(rc.total != ra.total);
}

TEST_CASE("out of range actions are clipped and flagged") {
  MillingEnv env(short_env());
  env.reset(2);
  VecX a(5);
  a << 800, 800, 800, 0, 0;
  CHECK_FALSE(env.step(a).info.action_clipped);
  a << 1e5, 800, 800, 0, 0;
  const EnvStep s = env.step(a);
  CHECK(s.info.action_clipped);
  CHECK(env.stiffness().maxCoeff() <= env.config().action.stiffness_max);
}

TEST_CASE("removal estimate agrees with the heightfield over an episode") {
  MillingEnv env(short_env());
  run(env, 5);
  CHECK(env.termination() == Termination::path_complete);
  CHECK(env.removed_total() > 0.0);
  CHECK(std::abs(env.mrv_total() - env.removed_total()) / env.removed_total() < 0.005);
  CHECK(env.initial_volume() - env.workpiece().volume() ==
        doctest::Approx(env.removed_total()).epsilon(1e-9));
}

TEST_CASE("reward replayed from the log equals the episode reward") {
  MillingEnv env(short_env());
  const RewardBreakdown r = run(env, 6);
  const RewardBreakdown q = replay_reward(env.log(), env.config().reward);
  CHECK(q.total == doctest::Approx(r.total).epsilon(1e-12));
  CHECK(q.mrv_term == doctest::Approx(r.mrv_term).epsilon(1e-12));
  CHECK(q.deviation_term == doctest::Approx(r.deviation_term).epsilon(1e-12));
  CHECK(q.force_term == doctest::Approx(r.force_term).epsilon(1e-12));
  CHECK(r.time_term == doctest::Approx(env.config().reward.q_cut * env.time()).epsilon(1e-9));
}

TEST_CASE("force weight calibration") {
  CHECK(calibrate_force_weight(0.01, 50.0, 62.5) == doctest::Approx(0.01 * 62.5 / 2500.0));
  RewardWeights w;
  CHECK(w.force_weight()[0] == doctest::Approx(2.5e-4));
  w.q_f = Vec3(1, 2, 3);
  CHECK(w.force_weight() == Vec3(1, 2, 3));
}

TEST_CASE("config validation") {
  EnvConfig c;
  CHECK_NOTHROW(c.validate());
  c.control_dt = 0.0205;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = {};
  c.initial_stiffness = 5000.0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = {};
  c.action.t_rate_min = -2.0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  CHECK(EnvConfig{}.control_substeps() == 20);
}
