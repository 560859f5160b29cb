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

#include <catch_amalgamated.hpp>

#include "contq/approx.hpp"
#include "contq/oracle.hpp"
#include "support/oracles.hpp"

using namespace contq;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("ergodic LQ fixed point for the reference problem") {
  const auto sol = lq_ergodic_fixed_point(LqParams::reference(), 0.1);
  REQUIRE_THAT(sol.policy.slope, WithinAbs(std::sqrt(7.0) - 3.0, 1e-12));
  REQUIRE_THAT(sol.policy.intercept, WithinAbs(-0.708497, 1e-6));
  REQUIRE_THAT(sol.policy.var, WithinAbs(0.035424868893540941, 1e-12));
  REQUIRE_THAT(sol.psi()(2), WithinAbs(-1.03776, 1e-5));
  REQUIRE_THAT(sol.k2, WithinAbs(-0.411438, 1e-6));
  REQUIRE_THAT(sol.k1, WithinAbs(-0.291503, 1e-6));
  REQUIRE_THAT(sol.V, WithinAbs(0.633374, 1e-6));
  REQUIRE_THAT(sol.mean_reward(), WithinAbs(0.658497, 1e-6));
  const auto snap = sol.snapshot();
  REQUIRE(snap.oracle);
  REQUIRE(snap.psi.size() == 3);
}

TEST_CASE("policy evaluation agrees with stationary moments") {
  const auto p = LqParams::reference();
  for (double k : {-0.8, -0.35, 0.0, 0.3})
    for (double c : {-0.7, 0.0, 0.5})
      for (double v : {0.03, 1.0}) {
        const auto ev = lq_evaluate_policy(p, 0.1, {k, c, v});
        REQUIRE_THAT(ev.V, WithinAbs(oracles::lq_stationary_value(p, 0.1, k, c, v), 1e-12));
      }
  REQUIRE_THAT(lq_evaluate_policy(p, 0.1, {0.0, 0.0, 1.0}).mean_reward, WithinAbs(-1.5, 1e-14));
}

TEST_CASE("the fixed point maximizes the stationary objective") {
  const auto p = LqParams::reference();
  const auto sol = lq_ergodic_fixed_point(p, 0.1);
  const double k = sol.policy.slope, c = sol.policy.intercept, v = sol.policy.var;
  const double best = oracles::lq_stationary_value(p, 0.1, k, c, v);
  REQUIRE_THAT(best, WithinAbs(sol.V, 1e-12));
  REQUIRE(std::abs(oracles::derivative([&](double s) { return oracles::lq_stationary_value(p, 0.1, s, c, v); }, k)) <
          1e-7);
  REQUIRE(std::abs(oracles::derivative([&](double s) { return oracles::lq_stationary_value(p, 0.1, k, s, v); }, c)) <
          1e-7);
  REQUIRE(std::abs(oracles::derivative([&](double s) { return oracles::lq_stationary_value(p, 0.1, k, c, s); }, v,
                                       1e-8)) < 1e-6);
  RngStream rng(1, {0, 0});
  for (int i = 0; i < 200; ++i) {
    const double dk = 0.2 * rng.normal(), dc = 0.2 * rng.normal(), dv = 0.5 * rng.uniform();
    if (!lq_mean_square_stable(p, k + dk)) continue;
    REQUIRE(oracles::lq_stationary_value(p, 0.1, k + dk, c + dc, v * (1.0 + dv)) <= best + 1e-12);
    REQUIRE(oracles::lq_stationary_value(p, 0.1, k + dk, c + dc, v / (1.0 + dv)) <= best + 1e-12);
  }
}

TEST_CASE("fixed point under alternative problem data") {
  LqParams p = LqParams::reference();
  p.B = 0.5;
  p.C = 0.2;
  const auto sol = lq_ergodic_fixed_point(p, 0.3);
  REQUIRE_THAT(oracles::lq_stationary_value(p, 0.3, sol.policy.slope, sol.policy.intercept, sol.policy.var),
               WithinAbs(sol.V, 1e-10));
  const auto again = lq_improve(p, 0.3, sol.k2, sol.k1);
  REQUIRE_THAT(again.slope, WithinAbs(sol.policy.slope, 1e-10));
  REQUIRE_THAT(again.intercept, WithinAbs(sol.policy.intercept, 1e-10));
  REQUIRE_THAT(again.var, WithinAbs(sol.policy.var, 1e-10));
}

TEST_CASE("flipping the linear reward terms flips the intercept") {
  LqParams p = LqParams::reference();
  const auto a = lq_ergodic_fixed_point(p, 0.1);
  p.P = -p.P;
  p.Q = -p.Q;
  const auto b = lq_ergodic_fixed_point(p, 0.1);
  REQUIRE_THAT(b.policy.intercept, WithinAbs(-a.policy.intercept, 1e-12));
  REQUIRE_THAT(b.policy.slope, WithinAbs(a.policy.slope, 1e-12));
  REQUIRE_THAT(b.V, WithinAbs(a.V, 1e-12));
}

TEST_CASE("Hamiltonian and q from a value function") {
  const auto env = builtin_lq_env(LqParams::reference());
  REQUIRE_THAT(hamiltonian(env, 0.0, scalar_state(1.0), scalar_action(2.0), scalar_state(1.0), Scalar1::Constant(2.0)),
               WithinAbs(-9.0, 1e-14));
  const auto J0 = lq_value(ParamVec<2>::Zero());
  REQUIRE_THAT(q_from_value_ergodic(env, J0, 0.0, scalar_state(1.0), scalar_action(0.0)), WithinAbs(-2.0, 1e-14));
}

TEST_CASE("optimal q is the normalized Gibbs exponent of the Hamiltonian") {
  const auto sol = lq_ergodic_fixed_point(LqParams::reference(), 0.1);
  const auto env = builtin_lq_env(sol.params);
  const auto q = sol.q_function();
  const auto J = sol.value_function();
  for (double x : {-1.0, 0.0, 0.7})
    for (double a : {-1.5, -0.2, 0.9})
      REQUIRE_THAT(q_from_value_ergodic(env, J, sol.V, scalar_state(x), scalar_action(a)),
                   WithinAbs(q.value(0.0, scalar_state(x), scalar_action(a)), 1e-12));
  for (double x : {-2.0, 0.3, 1.5}) REQUIRE(std::abs(feynman_kac_residual(env, J, sol.policy, 0.1, sol.V, x)) < 1e-12);
}

TEST_CASE("Feynman-Kac residual vanishes for arbitrary linear policies") {
  const auto p = LqParams::reference();
  const auto env = builtin_lq_env(p);
  const LinearGaussianPolicy pi{-0.6, 0.3, 0.4};
  const auto ev = lq_evaluate_policy(p, 0.1, pi);
  for (double x : {-1.0, 0.5, 2.0})
    REQUIRE(std::abs(feynman_kac_residual(env, ev.value_function(), pi, 0.1, ev.V, x)) < 1e-12);
}

TEST_CASE("improvement map is a fixed point at the optimum") {
  const auto sol = lq_ergodic_fixed_point(LqParams::reference(), 0.1);
  const auto env = builtin_lq_env(sol.params);
  const auto imp = policy_improvement_map(env, sol.value_function(), 0.1);
  for (double x : {-1.0, 0.0, 2.0}) {
    REQUIRE_THAT(imp.mean(0.0, scalar_state(x))(0), WithinAbs(sol.policy.slope * x + sol.policy.intercept, 1e-10));
    REQUIRE_THAT(imp.variance(0.0, scalar_state(x))(0, 0), WithinAbs(sol.policy.var, 1e-10));
  }
}

TEST_CASE("mean-variance improvement has mean -(mu/sigma^2)(x - w)") {
  const double mu = 0.3, sigma = 0.2, w = 1.3;
  const auto env = builtin_mv_env(mu, sigma);
  const NegatedValue<MeanVarianceValue> J(mv_value(ParamVec<3>(0.1, 0.2, 0.5), w, 1.4, 1.0));
  const auto imp = policy_improvement_map(env, J, 0.1, 0.0, scalar_state(1.0));
  for (double t : {0.0, 0.5})
    for (double x : {0.8, 1.0, 1.6})
      REQUIRE_THAT(imp.mean(t, scalar_state(x))(0), WithinAbs(-(mu / (sigma * sigma)) * (x - w), 1e-9));
}

TEST_CASE("closed-form mean-variance solution solves the exploratory HJB") {
  const double mu = -0.5, sigma = 0.1, gamma = 0.1, T = 1.0, w = 1.3, z = 1.4;
  const auto s = oracles::mv_solution(mu, sigma, gamma, T);
  const auto env = builtin_mv_env(mu, sigma);
  const NegatedValue<MeanVarianceValue> J(mv_value(ParamVec<3>(s.theta[0], s.theta[1], s.theta[2]), w, z, T));
  const auto q = mv_q(ParamVec<3>(s.psi[0], s.psi[1], s.psi[2]), w, gamma, T);
  for (double t : {0.0, 0.4, 0.9})
    for (double x : {0.9, 1.3, 1.7})
      for (double a : {-3.0, 0.0, 2.0}) {
        const double lhs = q_from_value(env, J, 0.0, t, scalar_state(x), scalar_action(a));
        REQUIRE_THAT(lhs, WithinAbs(q.value(t, scalar_state(x), scalar_action(a)), 1e-8 * std::max(1.0, std::abs(lhs))));
      }
}

TEST_CASE("degenerate problems are reported") {
  LqParams p = LqParams::reference();
  REQUIRE_THROWS_AS(lq_improve(p, 0.1, 10.0, 0.0), ImprovementUndefined);
  REQUIRE_THROWS_AS(lq_evaluate_policy(p, 0.1, {3.0, 0.0, 1.0}), InfeasibleProblem);
  REQUIRE_THROWS_AS(lq_evaluate_policy(p, 0.1, {0.0, 0.0, 0.0}), DomainError);
  REQUIRE_THROWS_AS(lq_ergodic_fixed_point(p, 0.0), ContractError);
  const auto env = builtin_lq_env(p);
  REQUIRE_THROWS_AS(policy_improvement_map(env, lq_value(ParamVec<2>(5.0, 0.0)), 0.1), ImprovementUndefined);
}

TEST_CASE("Q_dt expansion recovers q at small step sizes") {
  const auto sol = lq_ergodic_fixed_point(LqParams::reference(), 0.1);
  const auto env = builtin_lq_env(sol.params);
  const auto J = sol.value_function();
  QdtExpansionOptions opt;
  opt.paths = 40000;
  opt.V = sol.V;
  const auto x = scalar_state(0.5);
  const auto a = scalar_action(0.2);
  const auto res = qdt_expansion_check(env, J, 0.0, x, a, opt, RngStream(2, {0, 0}));
  const double q = q_from_value_ergodic(env, J, sol.V, x, a);
  double se = 0.0;
  for (double e : res.std_errors) se = std::max(se, e);
  REQUIRE(std::abs(res.intercept - q) < 6.0 * se + 0.02);
}
