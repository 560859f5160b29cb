// Copyright 2026 The contq Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <cmath>
#include <vector>

#include <catch_amalgamated.hpp>

#include "contq/approx.hpp"
#include "contq/envsim.hpp"
#include "contq/oracle.hpp"

using namespace contq;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

ScalarEnv::Noise noise(double v) { return ScalarEnv::Noise::Constant(v); }

}  // namespace

TEST_CASE("Euler step on the LQ preset") {
  const auto env = builtin_lq_env(LqParams::reference());
  SECTION("zero action, zero noise") {
    const auto st = step_euler(env, 0.0, scalar_state(1.0), scalar_action(0.0), 0.1, noise(0.0));
    REQUIRE_THAT(st.x_next(0), WithinAbs(0.9, 1e-15));
  }
  SECTION("noise enters through D a") {
    const auto st = step_euler(env, 0.0, scalar_state(1.0), scalar_action(2.0), 0.1, noise(0.072));
    REQUIRE_THAT(st.x_next(0), WithinAbs(1.044, 1e-14));
  }
  SECTION("reward rate at (1, 2)") {
    const auto st = step_euler(env, 0.0, scalar_state(1.0), scalar_action(2.0), 0.1, noise(0.0));
    REQUIRE_THAT(st.reward_rate, WithinAbs(-12.0, 1e-14));
  }
}

TEST_CASE("deterministic rollout follows x_k = 0.9^k") {
  const auto env = builtin_lq_env(LqParams::reference());
  auto zero = [](double, const ScalarEnv::State&, RngStream&) { return scalar_action(0.0); };
  const auto traj = simulate_episode(env, zero, EpisodeConfig{0.2, 0.1}, scalar_state(1.0), RngStream::zero_noise());
  REQUIRE(traj.steps() == 2);
  REQUIRE_THAT(traj.states[1](0), WithinAbs(0.9, 1e-15));
  REQUIRE_THAT(traj.states[2](0), WithinAbs(0.81, 1e-15));
  REQUIRE_FALSE(traj.terminal_payoff.has_value());
  REQUIRE_FALSE(traj.off_policy);
}

TEST_CASE("episode grid validation") {
  REQUIRE(EpisodeConfig{1.0, 0.04}.grid_count() == 25);
  REQUIRE_THROWS_AS((EpisodeConfig{1.0, 0.3}.grid_count()), ContractError);
  REQUIRE_THROWS_AS((EpisodeConfig{1.0, 0.0}.grid_count()), ContractError);
  REQUIRE_THROWS_AS((EpisodeConfig{1.0, -0.1}.grid_count()), ContractError);
  REQUIRE_THROWS_AS((EpisodeConfig{1.0, 0.1, 1, 0, 0}.grid_count()), ContractError);
}

TEST_CASE("a non-finite or exploding state aborts the step") {
  const auto env = builtin_lq_env(LqParams::reference());
  REQUIRE_THROWS_AS(step_euler(env, 0.0, scalar_state(1e9), scalar_action(0.0), 0.1, noise(0.0)), SimulationDiverged);
  REQUIRE_THROWS_AS(step_euler(env, 0.0, scalar_state(1.0), scalar_action(NAN), 0.1, noise(0.0)), SimulationDiverged);
  try {
    step_euler(env, 0.5, scalar_state(2e8), scalar_action(3.0), 0.1, noise(0.0));
    FAIL("expected divergence");
  } catch (const SimulationDiverged& e) {
    REQUIRE(e.time() == 0.5);
    REQUIRE(e.state() == std::vector<double>{2e8});
    REQUIRE(e.action() == std::vector<double>{3.0});
  }
}

TEST_CASE("mean-variance preset") {
  const auto env = builtin_mv_env(0.3, 0.2);
  const auto st = step_euler(env, 0.0, scalar_state(1.0), scalar_action(0.5), 0.04, noise(0.1));
  REQUIRE_THAT(st.x_next(0), WithinAbs(1.0 + 0.5 * 0.3 * 0.04 + 0.5 * 0.2 * 0.1, 1e-15));
  REQUIRE(st.reward_rate == 0.0);
  REQUIRE_THROWS_AS(builtin_mv_env(0.3, 0.0), ContractError);
  REQUIRE_THAT(mv_terminal_payoff(1.4, 1.4)(scalar_state(1.0)), WithinAbs(-0.16, 1e-15));
  REQUIRE_THAT(mv_terminal_payoff(1.2, 1.4)(scalar_state(1.05)), WithinAbs(0.0175, 1e-15));
}

TEST_CASE("stored episode and live stream agree under one seed") {
  const auto env = builtin_lq_env(LqParams::reference());
  const LinearGaussianPolicy pi{-0.3, 0.1, 0.5};
  const EpisodeConfig cfg{5.0, 0.01};
  const auto traj = simulate_episode(env, sampler(pi), cfg, scalar_state(0.2), RngStream(7, {0, 0}));
  TransitionStream stream(env, sampler(pi), cfg.dt, scalar_state(0.2), RngStream(7, {0, 0}));
  for (int k = 0; k < traj.steps(); ++k) {
    const auto tr = stream.next();
    REQUIRE(tr.a(0) == traj.actions[k](0));
    REQUIRE(tr.x_next(0) == traj.states[k + 1](0));
    REQUIRE(tr.r == traj.rewards[k]);
  }
}

TEST_CASE("behavior stream is tagged off-policy") {
  auto env = builtin_mv_env(0.3, 0.2);
  env.terminal_reward = mv_terminal_payoff(1.4, 1.4);
  auto fixed = [](double, const ScalarEnv::State&, RngStream& r) { return scalar_action(r.normal()); };
  const auto traj = make_behavior_stream(env, fixed, EpisodeConfig{1.0, 0.25}, scalar_state(1.0), RngStream(1, {0, 0}));
  REQUIRE(traj.off_policy);
  REQUIRE(traj.terminal_payoff.has_value());
  REQUIRE_THAT(*traj.terminal_payoff, WithinAbs(mv_terminal_payoff(1.4, 1.4)(traj.states.back()), 1e-15));
}

TEST_CASE("Euler increments have the exact one-step moments") {
  const LqParams p = LqParams::reference();
  const auto env = builtin_lq_env(p);
  RngStream rng(3, {0, 0});
  const double dt = 0.05, x = 0.7, a = -0.4;
  const int n = 100000;
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto st = step_euler(env, 0.0, scalar_state(x), scalar_action(a), dt, draw_increment(env, dt, rng));
    s += st.x_next(0);
    s2 += st.x_next(0) * st.x_next(0);
  }
  const double mean = x + (p.A * x + p.B * a) * dt;
  const double var = (p.C * x + p.D * a) * (p.C * x + p.D * a) * dt;
  REQUIRE(std::abs(s / n - mean) < 4.0 * std::sqrt(var / n));
  REQUIRE_THAT(s2 / n - (s / n) * (s / n), WithinRel(var, 0.02));
}

TEST_CASE("model validation") {
  ScalarEnv env = builtin_lq_env(LqParams::reference());
  REQUIRE_NOTHROW(env.validate());
  env.discount_beta = 0.1;
  REQUIRE_THROWS_AS(env.validate(), ContractError);
  env.terminal_reward = [](const ScalarEnv::State&) { return 0.0; };
  REQUIRE_NOTHROW(env.validate());
  env.reward_rate = nullptr;
  REQUIRE_THROWS_AS(env.validate(), ContractError);
}

TEST_CASE("multi-dimensional models run on dynamic sizes") {
  DynamicEnv env;
  env.state_dim = 2;
  env.action_dim = 1;
  env.noise_dim = 2;
  env.drift = [](double, const DynamicEnv::State& x, const DynamicEnv::Action& a) {
    DynamicEnv::State d(2);
    d << -x(0) + a(0), -x(1);
    return d;
  };
  env.diffusion = [](double, const DynamicEnv::State&, const DynamicEnv::Action&) {
    return DynamicEnv::Diffusion::Identity(2, 2);
  };
  env.reward_rate = [](double, const DynamicEnv::State& x, const DynamicEnv::Action&) { return -x.squaredNorm(); };
  REQUIRE_NOTHROW(env.validate());
  DynamicEnv::State x(2);
  x << 1.0, 2.0;
  DynamicEnv::Action a(1);
  a << 0.5;
  DynamicEnv::Noise dW(2);
  dW << 0.1, -0.1;
  const auto st = step_euler(env, 0.0, x, a, 0.1, dW);
  REQUIRE_THAT(st.x_next(0), WithinAbs(1.0 + (-1.0 + 0.5) * 0.1 + 0.1, 1e-15));
  REQUIRE_THAT(st.x_next(1), WithinAbs(2.0 - 0.2 - 0.1, 1e-15));
  REQUIRE_THAT(st.reward_rate, WithinAbs(-5.0, 1e-15));
  DynamicEnv::Noise bad(1);
  bad << 0.0;
  REQUIRE_THROWS_AS(step_euler(env, 0.0, x, a, 0.1, bad), ContractError);
}

TEST_CASE("noise-free Euler converges to the exact flow at first order") {
  LqParams p = LqParams::reference();
  p.D = 0.0;
  const auto env = builtin_lq_env(p);
  auto zero = [](double, const ScalarEnv::State&, RngStream&) { return scalar_action(0.0); };
  std::vector<double> dts{0.1, 0.05, 0.025}, errs;
  for (double dt : dts) {
    const auto traj = simulate_episode(env, zero, EpisodeConfig{1.0, dt}, scalar_state(1.0), RngStream::zero_noise());
    errs.push_back(std::abs(traj.states.back()(0) - std::exp(-1.0)));
    REQUIRE(errs.back() <= 0.5 * dt);
  }
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < dts.size(); ++i) {
    mx += std::log(dts[i]) / 3.0;
    my += std::log(errs[i]) / 3.0;
  }
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < dts.size(); ++i) {
    sxy += (std::log(dts[i]) - mx) * (std::log(errs[i]) - my);
    sxx += (std::log(dts[i]) - mx) * (std::log(dts[i]) - mx);
  }
  REQUIRE(sxy / sxx >= 0.9);
}
