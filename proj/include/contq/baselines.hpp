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

#include <cmath>
#include <concepts>
#include <numbers>
#include <optional>

#include <Eigen/Core>

#include "contq/approx.hpp"
#include "contq/envsim.hpp"
#include "contq/errors.hpp"
#include "contq/learners.hpp"

namespace contq {

// ---------------------------------------------------------------------------
// Delta-t parameterized Q functions

/// Q_dt^psi(t,x,a) inducing pi^psi proportional to exp{Q_dt / (gamma dt)}.
/// grad_psi_action is the gradient of the action-dependent part only.
template <class F>
concept QdtApprox =
    GaussianPolicyLike<F> && requires(const F& f, double t, const typename F::State& x, const typename F::Action& a) {
      typename F::Params;
      { f.psi } -> std::convertible_to<typename F::Params>;
      { f.gamma } -> std::convertible_to<double>;
      { f.dt } -> std::convertible_to<double>;
      { f.value(t, x, a) } -> std::convertible_to<double>;
      { f.grad_psi(t, x, a) } -> std::convertible_to<typename F::Params>;
      { f.grad_psi_action(t, x, a) } -> std::convertible_to<typename F::Params>;
    };

/// Q = -e^{-psi3 (T-t)}[(x-w)^2 + psi2 a (x-w) + e^{-psi1} a^2 / 2]
///     + psi4 (t^2 - T^2) + psi5 (t - T) + (w - z)^2,
/// policy N(-psi2 e^{psi1} (x-w), gamma dt e^{psi3 (T-t) + psi1}).
struct MeanVarianceQdt {
  using State = ScalarEnv::State;
  using Action = ScalarEnv::Action;
  using Covariance = Scalar1;
  using Params = ParamVec<5>;

  Params psi = Params::Zero();
  double w = 0.0;
  double z = 0.0;
  double horizon = 1.0;
  double gamma = 0.1;
  double dt = 0.04;

  Action mean(double, const State& x) const {
    return Action::Constant(-psi(1) * std::exp(psi(0)) * (x(0) - w));
  }
  Covariance variance(double t, const State&) const {
    return Covariance::Constant(gamma * dt * std::exp(psi(2) * (horizon - t) + psi(0)));
  }

  double value(double t, const State& x, const Action& a) const {
    const double tau = horizon - t;
    const double y = x(0) - w;
    const double u = a(0);
    return -std::exp(-psi(2) * tau) * (y * y + psi(1) * u * y + 0.5 * std::exp(-psi(0)) * u * u) +
           psi(3) * (t * t - horizon * horizon) + psi(4) * (t - horizon) + (w - z) * (w - z);
  }

  Params grad_psi(double t, const State& x, const Action& a) const {
    const double tau = horizon - t;
    const double y = x(0) - w;
    const double u = a(0);
    const double e3 = std::exp(-psi(2) * tau);
    const double e1 = std::exp(-psi(0));
    Params g;
    g << 0.5 * e3 * e1 * u * u, -e3 * u * y, tau * e3 * (y * y + psi(1) * u * y + 0.5 * e1 * u * u),
        t * t - horizon * horizon, t - horizon;
    return g;
  }

  Params grad_psi_action(double t, const State& x, const Action& a) const {
    const double tau = horizon - t;
    const double y = x(0) - w;
    const double u = a(0);
    const double e3 = std::exp(-psi(2) * tau);
    const double e1 = std::exp(-psi(0));
    Params g;
    g << 0.5 * e3 * e1 * u * u, -e3 * u * y, tau * e3 * (psi(1) * u * y + 0.5 * e1 * u * u), 0.0, 0.0;
    return g;
  }
};

inline MeanVarianceQdt qdt_mv_preset(const ParamVec<5>& psi, double w, double z, double horizon, double gamma,
                                     double dt) {
  if (!(gamma > 0.0) || !(dt > 0.0)) throw ContractError("qdt_mv_preset: gamma and dt must be positive");
  return {psi, w, z, horizon, gamma, dt};
}

/// Q = -(e^{-psi3}/2)(a - psi1 x - psi2)^2 + psi4 x^2 + psi5 x,
/// policy N(psi1 x + psi2, gamma dt e^{psi3}).
struct QuadraticQdt {
  using State = ScalarEnv::State;
  using Action = ScalarEnv::Action;
  using Covariance = Scalar1;
  using Params = ParamVec<5>;

  Params psi = Params::Zero();
  double gamma = 0.1;
  double dt = 0.1;

  Action mean(double, const State& x) const { return Action::Constant(psi(0) * x(0) + psi(1)); }
  Covariance variance(double, const State&) const { return Covariance::Constant(gamma * dt * std::exp(psi(2))); }

  double value(double, const State& x, const Action& a) const {
    const double e = a(0) - psi(0) * x(0) - psi(1);
    return -0.5 * std::exp(-psi(2)) * e * e + psi(3) * x(0) * x(0) + psi(4) * x(0);
  }

  Params grad_psi(double t, const State& x, const Action& a) const {
    Params g = grad_psi_action(t, x, a);
    g(3) = x(0) * x(0);
    g(4) = x(0);
    return g;
  }

  Params grad_psi_action(double, const State& x, const Action& a) const {
    const double p = std::exp(-psi(2));
    const double e = a(0) - psi(0) * x(0) - psi(1);
    Params g;
    g << p * e * x(0), p * e, 0.5 * p * e * e, 0.0, 0.0;
    return g;
  }
};

inline QuadraticQdt qdt_lq_preset(const ParamVec<5>& psi, double gamma, double dt) {
  if (!(gamma > 0.0) || !(dt > 0.0)) throw ContractError("qdt_lq_preset: gamma and dt must be positive");
  return {psi, gamma, dt};
}

// ---------------------------------------------------------------------------
// SARSA

/// raw: the conventional gradient dQ/dpsi. advantage: the action-dependent
/// part of the gradient is divided by dt, i.e. dq/dpsi replaces dQ/dpsi there.
enum class SarsaGrad { kRaw, kAdvantage };

template <QdtApprox Q>
struct SarsaParams {
  typename Q::Params psi;
  double V = 0.0;
};

/// Q(t',x',a') - gamma log pi(a'|t',x') dt - Q(t,x,a) + r dt - beta Q(t,x,a) dt.
/// If next_target is given it replaces the first two terms (terminal payoff
/// on the last step of an episode).
template <class Env, QdtApprox Q>
double sarsa_bracket(const Transition<Env>& tr, const typename Env::Action& a_next, const Q& qdt, double beta,
                     std::optional<double> next_target = std::nullopt) {
  const double t1 = tr.t + tr.dt;
  const double q0 = qdt.value(tr.t, tr.x, tr.a);
  const double next = next_target ? *next_target
                                  : qdt.value(t1, tr.x_next, a_next) -
                                        qdt.gamma * policy_log_density(qdt, t1, tr.x_next, a_next) * tr.dt;
  return next - q0 + tr.r * tr.dt - beta * q0 * tr.dt;
}

template <class Env, QdtApprox Q>
typename Q::Params sarsa_direction(const Transition<Env>& tr, const Q& qdt, SarsaGrad mode) {
  auto g = qdt.grad_psi(tr.t, tr.x, tr.a);
  if (mode == SarsaGrad::kAdvantage) {
    const auto ga = qdt.grad_psi_action(tr.t, tr.x, tr.a);
    g += ga * (1.0 / tr.dt - 1.0);
  }
  return g;
}

template <class Q>
typename Q::Params checked_psi(typename Q::Params next, const typename Q::Params& prev, double V, double bound) {
  if (!detail::all_finite_within(bound, next) || !std::isfinite(V) || std::abs(V) > bound)
    throw ParameterDiverged(detail::concat(prev));
  return next;
}

/// Episodic SARSA step; a_next must be drawn from pi^psi at (t + dt, x').
template <class Env, QdtApprox Q>
SarsaParams<Q> sarsa_update(const Transition<Env>& tr, const typename Env::Action& a_next, const Q& qdt,
                            const LearnerConfig& cfg, double beta, double j, SarsaGrad mode = SarsaGrad::kRaw,
                            std::optional<double> next_target = std::nullopt) {
  const double b = sarsa_bracket(tr, a_next, qdt, beta, next_target);
  const double l = cfg.rate(j);
  auto next = qdt.psi + (l * cfg.alpha_psi * b) * sarsa_direction(tr, qdt, mode);
  return {checked_psi<Q>(std::move(next), qdt.psi, 0.0, cfg.divergence_bound), 0.0};
}

/// Ergodic SARSA: -V dt replaces -beta Q dt and V moves with the same bracket.
template <class Env, QdtApprox Q>
SarsaParams<Q> sarsa_ergodic_update(const Transition<Env>& tr, const typename Env::Action& a_next, const Q& qdt,
                                    double V, const LearnerConfig& cfg, double elapsed,
                                    SarsaGrad mode = SarsaGrad::kRaw) {
  const double b = sarsa_bracket(tr, a_next, qdt, 0.0) - V * tr.dt;
  const double l = cfg.rate(elapsed);
  auto next = qdt.psi + (l * cfg.alpha_psi * b) * sarsa_direction(tr, qdt, mode);
  const double v_next = V + l * cfg.alpha_V * b;
  return {checked_psi<Q>(std::move(next), qdt.psi, v_next, cfg.divergence_bound), v_next};
}

// ---------------------------------------------------------------------------
// Policy gradient

/// A tractable policy family with its score d log pi / d phi.
template <class F>
concept PolicyFamily =
    GaussianPolicyLike<F> && requires(const F& f, double t, const typename F::State& x, const typename F::Action& a) {
      typename F::Params;
      { f.phi } -> std::convertible_to<typename F::Params>;
      { f.score(t, x, a) } -> std::convertible_to<typename F::Params>;
    };

/// N(phi1 x + phi2, e^{phi3}).
struct LinearGaussianFamily {
  using State = ScalarEnv::State;
  using Action = ScalarEnv::Action;
  using Covariance = Scalar1;
  using Params = ParamVec<3>;

  Params phi = Params::Zero();

  Action mean(double, const State& x) const { return Action::Constant(phi(0) * x(0) + phi(1)); }
  Covariance variance(double, const State&) const { return Covariance::Constant(std::exp(phi(2))); }

  Params score(double, const State& x, const Action& a) const {
    const double iv = std::exp(-phi(2));
    const double e = a(0) - phi(0) * x(0) - phi(1);
    return {e * x(0) * iv, e * iv, -0.5 + 0.5 * e * e * iv};
  }
};

/// N(-phi2 (x - w), gamma e^{phi1 + phi3 (T - t)}), the same shape as the
/// policy induced by mv_q.
struct MeanVarianceFamily {
  using State = ScalarEnv::State;
  using Action = ScalarEnv::Action;
  using Covariance = Scalar1;
  using Params = ParamVec<3>;

  Params phi = Params::Zero();
  double w = 0.0;
  double gamma = 0.1;
  double horizon = 1.0;

  Action mean(double, const State& x) const { return Action::Constant(-phi(1) * (x(0) - w)); }
  Covariance variance(double t, const State&) const {
    return Covariance::Constant(gamma * std::exp(phi(0) + phi(2) * (horizon - t)));
  }

  Params score(double t, const State& x, const Action& a) const {
    const double tau = horizon - t;
    const double iv = std::exp(-(phi(0) + phi(2) * tau)) / gamma;
    const double y = x(0) - w;
    const double e = a(0) + phi(1) * y;
    const double d_log_var = -0.5 + 0.5 * e * e * iv;
    return {d_log_var, -e * y * iv, tau * d_log_var};
  }
};

/// -gamma log pi(a|t,x) dt + J(t',x') - J(t,x) + r dt - beta J(t,x) dt - V dt.
/// The ergodic form passes beta = 0 and the running V; episodic runs pass V = 0.
template <class Env, ValueApprox J, PolicyFamily P>
double pg_bracket(const Transition<Env>& tr, const J& value, const P& policy, double gamma, double beta, double V = 0.0,
                  std::optional<double> next_value = std::nullopt) {
  const double j0 = value.value(tr.t, tr.x);
  const double j1 = next_value ? *next_value : value.value(tr.t + tr.dt, tr.x_next);
  return -gamma * policy_log_density(policy, tr.t, tr.x, tr.a) * tr.dt + j1 - j0 + tr.r * tr.dt -
         beta * j0 * tr.dt - V * tr.dt;
}

/// phi <- phi + l alpha_phi [bracket] d log pi / d phi, on-policy only.
template <class Env, ValueApprox J, PolicyFamily P>
typename P::Params pg_update(const Transition<Env>& tr, const J& value, const P& policy, const LearnerConfig& cfg,
                             double beta, double j, double V = 0.0, std::optional<double> next_value = std::nullopt) {
  const double b = pg_bracket(tr, value, policy, cfg.gamma, beta, V, next_value);
  auto next = policy.phi + (cfg.rate(j) * cfg.alpha_phi * b) * policy.score(tr.t, tr.x, tr.a);
  if (!detail::all_finite_within(cfg.divergence_bound, next)) throw ParameterDiverged(detail::concat(policy.phi));
  return next;
}

template <class J>
struct CriticParams {
  typename J::Params theta;
  double V = 0.0;
};

/// Entropy-regularized policy evaluation for the PG critic: the online TD
/// rule with q replaced by gamma log pi, xi = dJ/dtheta.
template <class Env, ValueApprox J, PolicyFamily P>
CriticParams<J> pg_critic_update(const Transition<Env>& tr, const J& value, const P& policy, double V,
                                 const LearnerConfig& cfg, double beta, double j, bool ergodic,
                                 std::optional<double> next_value = std::nullopt) {
  const double d = pg_bracket(tr, value, policy, cfg.gamma, beta, ergodic ? V : 0.0, next_value);
  const double l = cfg.rate(j);
  CriticParams<J> out{value.theta + (l * cfg.alpha_theta * d) * value.grad_theta(tr.t, tr.x),
                      ergodic ? V + l * cfg.alpha_V * d : V};
  if (!detail::all_finite_within(cfg.divergence_bound, out.theta) || !std::isfinite(out.V) ||
      std::abs(out.V) > cfg.divergence_bound)
    throw ParameterDiverged(detail::concat(value.theta));
  return out;
}

}  // namespace contq
