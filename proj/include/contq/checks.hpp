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

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "contq/approx.hpp"
#include "contq/baselines.hpp"
#include "contq/envsim.hpp"
#include "contq/experiments.hpp"
#include "contq/learners.hpp"
#include "contq/oracle.hpp"
#include "contq/quadrature.hpp"
#include "contq/rng.hpp"

namespace contq {

/// Outcome of one property check. value is the worst observed statistic,
/// compared against tolerance in the unit named by the check.
struct CheckResult {
  std::string name;
  bool passed = false;
  double value = 0.0;
  double tolerance = 0.0;
  std::string detail;
};

struct SuiteOptions {
  std::uint64_t seed = 1;
  /// Multiplies every Monte Carlo sample count; 1 is the full suite.
  double mc_scale = 1.0;
};

// ---------------------------------------------------------------------------
// Monte Carlo helpers

/// Sample mean and standard error.
struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

inline MeanSe mean_se(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  double m = 0.0;
  for (double x : v) m += x;
  m /= n;
  double s2 = 0.0;
  for (double x : v) s2 += (x - m) * (x - m);
  return {m, std::sqrt(s2 / (n - 1.0) / n)};
}

/// Mean and batch-means standard error of a long autocorrelated series.
inline MeanSe batch_means(const std::vector<double>& v, int batches = 50) {
  const std::size_t len = v.size() / static_cast<std::size_t>(batches);
  std::vector<double> b(batches, 0.0);
  for (int i = 0; i < batches; ++i) {
    for (std::size_t k = 0; k < len; ++k) b[i] += v[i * len + k];
    b[i] /= static_cast<double>(len);
  }
  return mean_se(b);
}

/// delta_k = J(x') - J(x) + r dt - q(x, a) dt - V dt along an ergodic LQ path
/// driven by the behavior N(mean, variance).
struct MartingaleCheckResult {
  MeanSe delta;
  double z_score = 0.0;
};

template <ValueApprox J, GaussianQApprox Q>
MartingaleCheckResult ergodic_martingale_check(const LqParams& p, const J& value, const Q& q, double V, double dt,
                                               long steps, double behavior_mean, double behavior_variance,
                                               RngStream rng, double x0 = 0.0) {
  const auto env = builtin_lq_env(p);
  const double sd = std::sqrt(behavior_variance);
  TransitionStream stream(
      env, [&](double, const ScalarEnv::State&, RngStream& r) { return scalar_action(behavior_mean + sd * r.normal()); },
      dt, scalar_state(x0), std::move(rng));
  std::vector<double> d(steps);
  for (long k = 0; k < steps; ++k) d[k] = ergodic_td_increment(stream.next(), value, q, V).delta;
  MartingaleCheckResult out;
  out.delta = batch_means(d, 100);
  out.z_score = out.delta.mean / out.delta.se;
  return out;
}

/// Long-run average of r - gamma log pi(a|x) under a Gaussian policy on the
/// ergodic LQ problem, with a batch-means standard error.
template <GaussianPolicyLike P>
MeanSe lq_regularized_average(const LqParams& p, const P& policy, double gamma, double dt, double horizon,
                              RngStream rng, double burn_in = 50.0) {
  const auto env = builtin_lq_env(p);
  TransitionStream stream(env, sampler(policy), dt, scalar_state(0.0), std::move(rng));
  const long burn = std::lround(burn_in / dt);
  for (long k = 0; k < burn; ++k) stream.next();
  const long steps = std::lround(horizon / dt);
  std::vector<double> v(steps);
  for (long k = 0; k < steps; ++k) {
    const auto tr = stream.next();
    v[k] = tr.r - gamma * policy_log_density(policy, tr.t, tr.x, tr.a);
  }
  return batch_means(v, 50);
}

// ---------------------------------------------------------------------------
// Finite differences

namespace detail {

/// Largest relative discrepancy between an analytic gradient and central
/// differences of f over all coordinates.
template <class Vec, class F, class G>
double gradient_discrepancy(const Vec& at, F f, G grad) {
  const Vec g = grad(at);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < at.size(); ++i) {
    const double h = 1e-5 * std::max(1.0, std::abs(at(i)));
    Vec up = at, dn = at;
    up(i) += h;
    dn(i) -= h;
    const double fd = (f(up) - f(dn)) / (2.0 * h);
    worst = std::max(worst, std::abs(g(i) - fd) / std::max(1.0, std::abs(fd)));
  }
  return worst;
}

template <class F>
double scalar_discrepancy(double at, double analytic, F f) {
  const double h = 1e-5 * std::max(1.0, std::abs(at));
  const double fd = (f(at + h) - f(at - h)) / (2.0 * h);
  return std::abs(analytic - fd) / std::max(1.0, std::abs(fd));
}

inline double uniform_in(RngStream& rng, double lo, double hi) { return lo + (hi - lo) * rng.uniform(); }

template <int L>
ParamVec<L> random_params(RngStream& rng, double lo, double hi) {
  ParamVec<L> v;
  for (int i = 0; i < L; ++i) v(i) = uniform_in(rng, lo, hi);
  return v;
}

/// Short mean-variance episode under N(0, 0.5) actions, for gradient fixtures.
inline Trajectory<ScalarEnv> mv_fixture(RngStream& rng, int K, double w, double z) {
  auto env = builtin_mv_env(0.3, 0.2);
  env.terminal_reward = mv_terminal_payoff(w, z);
  EpisodeConfig cfg{1.0, 1.0 / K, 1, 0, 1};
  const std::uint64_t sub = rng();
  return simulate_episode(
      env, [](double, const ScalarEnv::State&, RngStream& r) { return scalar_action(std::sqrt(0.5) * r.normal()); },
      cfg, scalar_state(1.0), RngStream(sub, {0, 0}));
}

}  // namespace detail

/// J + q dt viewed as a dt-parameterized Q function acting with a given
/// Gaussian policy, which need not be the Gibbs policy of q.
template <ValueApprox J, GaussianPolicyLike P>
struct CombinedQdt {
  using State = typename P::State;
  using Action = typename P::Action;
  using Covariance = typename P::Covariance;
  using Params = ParamVec<1>;

  J value_fn;
  std::function<double(double, const State&, const Action&)> q;
  P policy;
  double gamma = 0.1;
  double dt = 0.1;
  Params psi = Params::Zero();

  Action mean(double t, const State& x) const { return policy.mean(t, x); }
  Covariance variance(double t, const State& x) const { return policy.variance(t, x); }
  double value(double t, const State& x, const Action& a) const { return value_fn.value(t, x) + q(t, x, a) * dt; }
  Params grad_psi(double, const State&, const Action&) const { return Params::Zero(); }
  Params grad_psi_action(double, const State&, const Action&) const { return Params::Zero(); }
};

// ---------------------------------------------------------------------------
// Individual checks

/// Policy-evaluation consistency: for the exact value function of a linear
/// Gaussian policy, the integral of (q - gamma log pi) pi over actions is 0.
inline CheckResult check_average_consistency(RngStream rng) {
  const auto p = LqParams::reference();
  const auto env = builtin_lq_env(p);
  const double gamma = 0.1;
  double worst = 0.0;
  for (int n = 0; n < 5; ++n) {
    const LinearGaussianPolicy pi{detail::uniform_in(rng, -1.2, 0.5), detail::uniform_in(rng, -1.0, 1.0),
                                  detail::uniform_in(rng, 0.05, 1.0)};
    const auto pv = lq_evaluate_policy(p, gamma, pi);
    const auto J = pv.value_function();
    for (double x : {-3.0, -1.0, 0.0, 0.5, 2.0}) {
      const auto xs = scalar_state(x);
      const double m = pi.mean(0.0, xs)(0);
      const double s = std::sqrt(pi.var);
      const double val = integrate_interval(
          [&](double a) {
            const auto as = scalar_action(a);
            const double q = q_from_value_ergodic(env, J, pv.V, xs, as);
            const double logpi = policy_log_density(pi, 0.0, xs, as);
            return (q - gamma * logpi) * std::exp(logpi);
          },
          m - 14.0 * s, m + 14.0 * s);
      worst = std::max(worst, std::abs(val));
    }
  }
  return {"average-consistency quadrature", worst < 1e-8, worst, 1e-8, "max |int (q - gamma log pi) pi da|"};
}

/// Normalization: exp(q / gamma) integrates to one for the oracle q* and for
/// the parametric Gaussian q families at random parameters.
inline CheckResult check_gibbs_normalization(RngStream rng) {
  const auto p = LqParams::reference();
  const double gamma = 0.1;
  const auto sol = lq_ergodic_fixed_point(p, gamma);
  const auto env = builtin_lq_env(p);
  const auto Jstar = sol.value_function();
  double worst = 0.0;
  auto integrate = [&](auto q_of_a, double m, double var) {
    const double s = std::sqrt(var);
    return integrate_interval([&](double a) { return std::exp(q_of_a(a) / gamma); }, m - 14.0 * s, m + 14.0 * s);
  };
  for (double x : {-5.0, -2.0, 0.0, 1.0, 5.0}) {
    const auto xs = scalar_state(x);
    const double val = integrate(
        [&](double a) { return q_from_value_ergodic(env, Jstar, sol.V, xs, scalar_action(a)); },
        sol.policy.mean(0.0, xs)(0), sol.policy.var);
    worst = std::max(worst, std::abs(val - 1.0));
  }
  for (int n = 0; n < 5; ++n) {
    const auto lq = lq_q(detail::random_params<3>(rng, -1.5, 1.5), gamma);
    const auto mv = mv_q(detail::random_params<3>(rng, -1.5, 1.5), 1.3, gamma, 1.0);
    const double x = detail::uniform_in(rng, -2.0, 2.0);
    const double t = detail::uniform_in(rng, 0.0, 1.0);
    const auto xs = scalar_state(x);
    worst = std::max(worst, std::abs(integrate([&](double a) { return lq.value(t, xs, scalar_action(a)); },
                                               lq.mean(t, xs)(0), lq.variance(t, xs)(0, 0)) -
                                     1.0));
    worst = std::max(worst, std::abs(integrate([&](double a) { return mv.value(t, xs, scalar_action(a)); },
                                               mv.mean(t, xs)(0), mv.variance(t, xs)(0, 0)) -
                                     1.0));
  }
  return {"gibbs-normalization quadrature", worst < 1e-8, worst, 1e-8, "max |int exp(q/gamma) da - 1|"};
}

/// Every analytic gradient against central differences.
inline CheckResult check_gradients(RngStream rng) {
  double worst = 0.0;
  std::string where;
  auto record = [&](double v, const char* name) {
    if (v > worst) {
      worst = v;
      where = name;
    }
  };
  const double gamma = 0.1;
  for (int n = 0; n < 5; ++n) {
    const double t = detail::uniform_in(rng, 0.0, 1.0);
    const auto x = scalar_state(detail::uniform_in(rng, -2.0, 2.0));
    const auto a = scalar_action(detail::uniform_in(rng, -2.0, 2.0));
    const double w = detail::uniform_in(rng, 0.5, 2.0);

    const auto th2 = detail::random_params<2>(rng, -1.0, 1.0);
    record(detail::gradient_discrepancy(
               th2, [&](const ParamVec<2>& v) { return lq_value(v).value(t, x); },
               [&](const ParamVec<2>& v) { return lq_value(v).grad_theta(t, x); }),
           "QuadraticValue theta");
    const auto qv = lq_value(th2);
    record(detail::scalar_discrepancy(x(0), qv.state_gradient(t, x)(0),
                                      [&](double y) { return qv.value(t, scalar_state(y)); }),
           "QuadraticValue x");
    record(detail::scalar_discrepancy(x(0), qv.state_hessian(t, x)(0, 0),
                                      [&](double y) { return qv.state_gradient(t, scalar_state(y))(0); }),
           "QuadraticValue xx");

    const auto th3 = detail::random_params<3>(rng, -1.0, 1.0);
    auto mvv = [&](const ParamVec<3>& v) { return NegatedValue<MeanVarianceValue>(mv_value(v, w, 1.4, 1.0)); };
    record(detail::gradient_discrepancy(
               th3, [&](const ParamVec<3>& v) { return mvv(v).value(t, x); },
               [&](const ParamVec<3>& v) { return mvv(v).grad_theta(t, x); }),
           "MeanVarianceValue theta");
    const auto mj = mvv(th3);
    record(detail::scalar_discrepancy(t, mj.time_derivative(t, x), [&](double s) { return mj.value(s, x); }),
           "MeanVarianceValue t");
    record(detail::scalar_discrepancy(x(0), mj.state_gradient(t, x)(0),
                                      [&](double y) { return mj.value(t, scalar_state(y)); }),
           "MeanVarianceValue x");
    record(detail::scalar_discrepancy(x(0), mj.state_hessian(t, x)(0, 0),
                                      [&](double y) { return mj.state_gradient(t, scalar_state(y))(0); }),
           "MeanVarianceValue xx");

    const auto ps3 = detail::random_params<3>(rng, -1.0, 1.0);
    record(detail::gradient_discrepancy(
               ps3, [&](const ParamVec<3>& v) { return lq_q(v, gamma).value(t, x, a); },
               [&](const ParamVec<3>& v) { return lq_q(v, gamma).grad_psi(t, x, a); }),
           "QuadraticQ psi");
    record(detail::gradient_discrepancy(
               ps3, [&](const ParamVec<3>& v) { return mv_q(v, w, gamma, 1.0).value(t, x, a); },
               [&](const ParamVec<3>& v) { return mv_q(v, w, gamma, 1.0).grad_psi(t, x, a); }),
           "MeanVarianceQ psi");

    const auto ps5 = detail::random_params<5>(rng, -1.0, 1.0);
    record(detail::gradient_discrepancy(
               ps5, [&](const ParamVec<5>& v) { return qdt_lq_preset(v, gamma, 0.1).value(t, x, a); },
               [&](const ParamVec<5>& v) { return qdt_lq_preset(v, gamma, 0.1).grad_psi(t, x, a); }),
           "QuadraticQdt psi");
    record(detail::gradient_discrepancy(
               ps5, [&](const ParamVec<5>& v) { return qdt_mv_preset(v, w, 1.4, 1.0, gamma, 0.04).value(t, x, a); },
               [&](const ParamVec<5>& v) { return qdt_mv_preset(v, w, 1.4, 1.0, gamma, 0.04).grad_psi(t, x, a); }),
           "MeanVarianceQdt psi");

    record(detail::gradient_discrepancy(
               ps3, [&](const ParamVec<3>& v) { return policy_log_density(LinearGaussianFamily{v}, t, x, a); },
               [&](const ParamVec<3>& v) { return LinearGaussianFamily{v}.score(t, x, a); }),
           "LinearGaussianFamily score");
    record(detail::gradient_discrepancy(
               ps3,
               [&](const ParamVec<3>& v) { return policy_log_density(MeanVarianceFamily{v, w, gamma, 1.0}, t, x, a); },
               [&](const ParamVec<3>& v) { return MeanVarianceFamily{v, w, gamma, 1.0}.score(t, x, a); }),
           "MeanVarianceFamily score");

    // The martingale-loss direction is the exact negative loss gradient.
    const auto traj = detail::mv_fixture(rng, 8, w, 1.4);
    Eigen::Matrix<double, 6, 1> both;
    both << th3, ps3 * 0.5;
    auto loss = [&](const Eigen::Matrix<double, 6, 1>& v) {
      return martingale_loss(traj, mvv(v.head<3>()), mv_q(v.tail<3>(), w, gamma, 1.0), 0.0);
    };
    auto neg_grad = [&](const Eigen::Matrix<double, 6, 1>& v) {
      const auto d = ml_direction(traj, mvv(v.head<3>()), mv_q(v.tail<3>(), w, gamma, 1.0), 0.0, MlInnerSum::kDisplay);
      Eigen::Matrix<double, 6, 1> g;
      g << -d.theta, -d.psi;
      return g;
    };
    record(detail::gradient_discrepancy(both, loss, neg_grad), "martingale loss");
  }
  return {"analytic gradients vs central differences", worst < 1e-5, worst, 1e-5, "worst relative error: " + where};
}

/// O(K) backward recursion against the O(K^2) definition of G_{t_k:T}.
inline CheckResult check_martingale_recursion(RngStream rng) {
  double worst = 0.0;
  for (int n = 0; n < 5; ++n) {
    const double w = detail::uniform_in(rng, 0.5, 2.0);
    const auto traj = detail::mv_fixture(rng, 20 + 7 * n, w, 1.4);
    const NegatedValue<MeanVarianceValue> J(mv_value(detail::random_params<3>(rng, -1.0, 1.0), w, 1.4, 1.0));
    const auto q = mv_q(detail::random_params<3>(rng, -1.0, 1.0), w, 0.1, 1.0);
    const double beta = n % 2 == 0 ? 0.0 : 0.3;
    const auto g = martingale_residuals(traj, J, q, beta);
    const int K = traj.steps();
    const double dt = traj.dt();
    double loss_direct = 0.0;
    for (int k = 0; k < K; ++k) {
      double acc = std::exp(-beta * (traj.times[K] - traj.times[k])) * *traj.terminal_payoff -
                   J.value(traj.times[k], traj.states[k]);
      for (int i = k; i < K; ++i)
        acc += std::exp(-beta * (traj.times[i] - traj.times[k])) *
               (traj.rewards[i] - q.value(traj.times[i], traj.states[i], traj.actions[i])) * dt;
      worst = std::max(worst, std::abs(acc - g[k]) / std::max(1.0, std::abs(acc)));
      loss_direct += 0.5 * acc * acc * dt;
    }
    const double loss = martingale_loss(traj, J, q, beta);
    worst = std::max(worst, std::abs(loss - loss_direct) / std::max(1.0, std::abs(loss_direct)));
  }
  return {"martingale loss recursion vs direct sum", worst < 1e-12, worst, 1e-12, "worst relative error"};
}

/// alpha = 0 leaves every parameter bit-identical.
inline CheckResult check_zero_learning_rate(RngStream rng) {
  LearnerConfig cfg;
  cfg.alpha_theta = cfg.alpha_psi = cfg.alpha_V = cfg.alpha_w = cfg.alpha_phi = 0.0;
  const double w = 1.2;
  const auto traj = detail::mv_fixture(rng, 10, w, 1.4);
  const NegatedValue<MeanVarianceValue> J(mv_value(detail::random_params<3>(rng, -1.0, 1.0), w, 1.4, 1.0));
  const auto q = mv_q(detail::random_params<3>(rng, -1.0, 1.0), w, 0.1, 1.0);
  bool same = true;
  std::string broken;
  auto expect = [&](bool ok, const char* name) {
    if (!ok && same) broken = name;
    same = same && ok;
  };
  const auto ml = ml_update(traj, J, q, cfg, 0.0, 3.0);
  expect(ml.theta == J.theta && ml.psi == q.psi, "ml_update");
  const auto td = offline_td_update(traj, J, q, cfg, 0.0, 3.0);
  expect(td.theta == J.theta && td.psi == q.psi, "offline_td_update");
  const auto tr = traj.transition(2);
  const auto on = online_td_update(tr, J, q, cfg, 0.0, 3.0);
  expect(on.theta == J.theta && on.psi == q.psi, "online_td_update");

  const auto lqJ = lq_value(detail::random_params<2>(rng, -1.0, 1.0));
  const auto lqq = lq_q(detail::random_params<3>(rng, -1.0, 1.0), 0.1);
  const auto env = builtin_lq_env(LqParams::reference());
  const Transition<ScalarEnv> lt{0.0, 0.1, scalar_state(1.0), scalar_action(0.3), env.reward_rate(0.0, scalar_state(1.0), scalar_action(0.3)), scalar_state(0.9)};
  const auto er = ergodic_update(lt, lqJ, lqq, 0.25, cfg, 5.0);
  expect(er.theta == lqJ.theta && er.psi == lqq.psi && er.V == 0.25, "ergodic_update");

  const auto Q = qdt_lq_preset(detail::random_params<5>(rng, -1.0, 1.0), 0.1, 0.1);
  const auto s1 = sarsa_update(lt, scalar_action(0.1), Q, cfg, 0.0, 2.0);
  expect(s1.psi == Q.psi, "sarsa_update");
  const auto s2 = sarsa_ergodic_update(lt, scalar_action(0.1), Q, 0.25, cfg, 2.0);
  expect(s2.psi == Q.psi && s2.V == 0.25, "sarsa_ergodic_update");

  const LinearGaussianFamily pg{detail::random_params<3>(rng, -1.0, 1.0)};
  expect(pg_update(lt, lqJ, pg, cfg, 0.0, 2.0, 0.25) == pg.phi, "pg_update");
  const auto cr = pg_critic_update(lt, lqJ, pg, 0.25, cfg, 0.0, 2.0, true);
  expect(cr.theta == lqJ.theta && cr.V == 0.25, "pg_critic_update");
  expect(lagrange_update(w, {1.1, 1.3, 1.7}, 0.0, 1.4, false) == w, "lagrange_update");
  return {"zero learning rate identity", same, same ? 0.0 : 1.0, 0.0,
          same ? "all updates bit-identical" : "changed: " + broken};
}

/// One policy-improvement step does not lower the Monte Carlo long-run
/// regularized reward by more than 3 standard errors.
inline CheckResult check_policy_improvement(RngStream rng, double mc_scale, int policies = 20) {
  const auto p = LqParams::reference();
  const auto env = builtin_lq_env(p);
  const double gamma = 0.1;
  const double dt = 0.01;
  const double horizon = std::max(200.0, 2000.0 * mc_scale);
  double worst = -std::numeric_limits<double>::infinity();
  double min_gain = std::numeric_limits<double>::infinity();
  for (int n = 0; n < policies; ++n) {
    const LinearGaussianPolicy pi{detail::uniform_in(rng, -1.2, 0.6), detail::uniform_in(rng, -1.5, 1.5),
                                  detail::uniform_in(rng, 0.05, 1.5)};
    const auto pv = lq_evaluate_policy(p, gamma, pi);
    const auto improved = policy_improvement_map(env, pv.value_function(), gamma);
    const std::uint64_t s = rng();
    const auto before = lq_regularized_average(p, pi, gamma, dt, horizon, RngStream(s, {0, 0}));
    const auto after = lq_regularized_average(p, improved, gamma, dt, horizon, RngStream(s, {0, 1}));
    const double se = std::hypot(before.se, after.se);
    const double z = (before.mean - after.mean) / se;
    worst = std::max(worst, z);
    min_gain = std::min(min_gain, after.mean - before.mean);
  }
  std::ostringstream os;
  os << "max standardized decrease over " << policies << " policies; smallest gain " << min_gain;
  return {"policy improvement monotonicity", worst < 3.0, worst, 3.0, os.str()};
}

/// For a policy pi with value function J and q-function q, the SARSA bracket
/// of Q = J + q dt exceeds the q-learning increment by
/// [q(x', a') - gamma log pi(a'|x')] dt, which has mean zero over a' ~ pi.
inline CheckResult check_sarsa_extra_term(RngStream rng, double mc_scale) {
  const auto p = LqParams::reference();
  const auto env = builtin_lq_env(p);
  const double gamma = 0.1;
  const double dt = 0.1;
  const int draws = std::max(10000, static_cast<int>(200000 * mc_scale));
  double worst = 0.0;
  for (int n = 0; n < 3; ++n) {
    const LinearGaussianPolicy pi{detail::uniform_in(rng, -1.0, 0.3), detail::uniform_in(rng, -1.0, 1.0),
                                  detail::uniform_in(rng, 0.1, 1.0)};
    const auto pv = lq_evaluate_policy(p, gamma, pi);
    const auto J = pv.value_function();
    auto q = [&env, J, V = pv.V](double, const ScalarEnv::State& x, const ScalarEnv::Action& a) {
      return q_from_value_ergodic(env, J, V, x, a);
    };
    const CombinedQdt<QuadraticValue, LinearGaussianPolicy> Q{J, q, pi, gamma, dt};
    const auto xs = scalar_state(detail::uniform_in(rng, -2.0, 2.0));
    const auto a = scalar_action(0.2);
    const Transition<ScalarEnv> tr{0.0, dt, xs, a, env.reward_rate(0.0, xs, a), scalar_state(0.8 * xs(0) + 0.1)};
    const double td = J.value(dt, tr.x_next) - J.value(0.0, xs) + tr.r * dt - q(0.0, xs, a) * dt;
    std::vector<double> diff(draws);
    for (auto& d : diff) d = sarsa_bracket(tr, policy_sample(pi, dt, tr.x_next, rng), Q, 0.0) - td;
    const auto ms = mean_se(diff);
    worst = std::max(worst, std::abs(ms.mean) / ms.se);
  }
  return {"sarsa extra term mean zero", worst < 4.0, worst, 4.0, "max |mean| / SE over three policies"};
}

/// Monte Carlo Q_dt expansion: the intercept of (Q_dt - J)/dt against dt
/// recovers q(x, a) for the oracle value function.
inline CheckResult check_qdt_expansion(RngStream rng, double mc_scale) {
  const auto p = LqParams::reference();
  const auto sol = lq_ergodic_fixed_point(p, 0.1);
  const auto env = builtin_lq_env(p);
  QdtExpansionOptions opt;
  opt.paths = std::max(10000, static_cast<int>(100000 * mc_scale));
  opt.V = sol.V;
  const auto xs = scalar_state(1.0);
  const auto a = scalar_action(0.0);
  const auto r = qdt_expansion_check(env, sol.value_function(), 0.0, xs, a, opt, std::move(rng));
  const double exact = q_from_value_ergodic(env, sol.value_function(), sol.V, xs, a);
  const double err = std::abs(r.intercept - exact);
  std::ostringstream os;
  os << "intercept " << r.intercept << " vs q(1,0) " << exact;
  return {"Q_dt expansion intercept", err < 0.05, err, 0.05, os.str()};
}

/// Off-policy martingale property of the oracle (J*, q*, V*).
inline CheckResult check_oracle_martingale(RngStream rng, long steps) {
  const auto sol = lq_ergodic_fixed_point(LqParams::reference(), 0.1);
  const auto r = ergodic_martingale_check(LqParams::reference(), sol.value_function(), sol.q_function(), sol.V,
                                          0.01, steps, 0.0, 1.0, std::move(rng));
  std::ostringstream os;
  os << "mean delta " << r.delta.mean << " (SE " << r.delta.se << ") over " << steps << " steps";
  return {"oracle martingale mean", std::abs(r.z_score) < 4.0, std::abs(r.z_score), 4.0, os.str()};
}

/// The full property suite, in a fixed order.
inline std::vector<CheckResult> run_property_suite(const SuiteOptions& opt = {}) {
  std::vector<CheckResult> out;
  auto stream = [&](std::uint64_t k) { return RngStream(opt.seed, {k, 0}); };
  out.push_back(check_average_consistency(stream(1)));
  out.push_back(check_gibbs_normalization(stream(2)));
  out.push_back(check_gradients(stream(3)));
  out.push_back(check_martingale_recursion(stream(4)));
  out.push_back(check_zero_learning_rate(stream(5)));
  out.push_back(check_policy_improvement(stream(6), opt.mc_scale));
  out.push_back(check_sarsa_extra_term(stream(7), opt.mc_scale));
  out.push_back(check_qdt_expansion(stream(8), opt.mc_scale));
  out.push_back(check_oracle_martingale(stream(9), std::max(100000L, std::lround(1e6 * opt.mc_scale))));
  return out;
}

}  // namespace contq
