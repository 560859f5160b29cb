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
#include <limits>
#include <numbers>
#include <optional>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "contq/approx.hpp"
#include "contq/envsim.hpp"
#include "contq/errors.hpp"
#include "contq/quadrature.hpp"
#include "contq/rng.hpp"

namespace contq {

template <class Env>
using StateHessian = Eigen::Matrix<double, Env::kStateDim, Env::kStateDim>;

/// H(t,x,a,p,q) = b . p + 1/2 tr(sigma sigma' q) + r.
template <class Env>
double hamiltonian(const Env& model, double t, const typename Env::State& x, const typename Env::Action& a,
                   const typename Env::State& p, const StateHessian<Env>& q_hess) {
  const auto sig = model.diffusion(t, x, a);
  return model.drift(t, x, a).dot(p) + 0.5 * (sig * sig.transpose() * q_hess).trace() + model.reward_rate(t, x, a);
}

/// q = dJ/dt + H(t, x, a, dJ/dx, d2J/dx2) - beta J.
template <class Env, SmoothValueApprox J>
double q_from_value(const Env& model, const J& value, double beta, double t, const typename Env::State& x,
                    const typename Env::Action& a) {
  return value.time_derivative(t, x) +
         hamiltonian(model, t, x, a, value.state_gradient(t, x), value.state_hessian(t, x)) -
         beta * value.value(t, x);
}

/// Ergodic convention: q = H(x, a, J', J'') - V.
template <class Env, SmoothValueApprox J>
double q_from_value_ergodic(const Env& model, const J& value, double V, const typename Env::State& x,
                            const typename Env::Action& a) {
  return hamiltonian(model, 0.0, x, a, value.state_gradient(0.0, x), value.state_hessian(0.0, x)) - V;
}

// ---------------------------------------------------------------------------
// Scalar linear-Gaussian policies on the ergodic LQ problem

/// a ~ N(slope x + intercept, variance).
struct LinearGaussianPolicy {
  using State = ScalarEnv::State;
  using Action = ScalarEnv::Action;
  using Covariance = Scalar1;

  double slope = 0.0;
  double intercept = 0.0;
  double var = 1.0;

  Action mean(double, const State& x) const { return Action::Constant(slope * x(0) + intercept); }
  Covariance variance(double, const State&) const { return Covariance::Constant(var); }
};

/// Value of a linear-Gaussian policy: J(x) = k2 x^2 + k1 x and the
/// entropy-regularized long-run average V. mean_reward drops the entropy.
struct LqPolicyValue {
  double k2 = 0.0;
  double k1 = 0.0;
  double V = 0.0;
  double mean_reward = 0.0;

  QuadraticValue value_function() const { return lq_value(ParamVec<2>(k2, k1)); }
};

/// 2(A + B k) + (C + D k)^2 < 0: the second moment of the closed loop decays.
inline bool lq_mean_square_stable(const LqParams& p, double slope) {
  return 2.0 * (p.A + p.B * slope) + (p.C + p.D * slope) * (p.C + p.D * slope) < 0.0;
}

/// Solves the ergodic Feynman–Kac identity for quadratic J by matching the
/// x^2, x and constant coefficients.
inline LqPolicyValue lq_evaluate_policy(const LqParams& p, double gamma, const LinearGaussianPolicy& pi) {
  if (!(pi.var > 0.0)) throw DomainError("lq_evaluate_policy: variance must be positive");
  if (!lq_mean_square_stable(p, pi.slope)) throw InfeasibleProblem("lq_evaluate_policy: policy is not stabilizing");
  const double k = pi.slope, c = pi.intercept, v = pi.var;
  const double a_cl = p.A + p.B * k;
  const double s_cl = p.C + p.D * k;
  LqPolicyValue out;
  out.k2 = (0.5 * p.M + p.R * k + 0.5 * p.N * k * k) / (2.0 * a_cl + s_cl * s_cl);
  out.k1 = (p.R * c + p.N * k * c + p.P + p.Q * k - 2.0 * out.k2 * c * (p.B + s_cl * p.D)) / a_cl;
  const double second = c * c + v;
  out.mean_reward = p.B * c * out.k1 + out.k2 * p.D * p.D * second - 0.5 * p.N * second - p.Q * c;
  out.V = out.mean_reward + 0.5 * gamma * std::log(2.0 * std::numbers::pi * std::numbers::e * v);
  return out;
}

/// Gibbs improvement exp{H(x, ., J', J'') / gamma} for quadratic J.
inline LinearGaussianPolicy lq_improve(const LqParams& p, double gamma, double k2, double k1) {
  const double curv = p.N - 2.0 * p.D * p.D * k2;
  if (!(curv > 0.0)) throw ImprovementUndefined("lq_improve: Hamiltonian not concave in the action");
  LinearGaussianPolicy out;
  out.slope = (2.0 * k2 * (p.B + p.C * p.D) - p.R) / curv;
  out.intercept = (p.B * k1 - p.Q) / curv;
  out.var = gamma / curv;
  return out;
}

/// Optimal exploratory solution of the ergodic LQ problem.
struct LqErgodicSolution {
  LqParams params;
  double gamma = 0.0;
  double k2 = 0.0;
  double k1 = 0.0;
  double V = 0.0;
  LinearGaussianPolicy policy;

  /// lq_q parameters (slope, intercept, log(variance / gamma)).
  ParamVec<3> psi() const { return {policy.slope, policy.intercept, std::log(policy.var / gamma)}; }
  ParamVec<2> theta() const { return {k2, k1}; }
  QuadraticValue value_function() const { return lq_value(theta()); }
  QuadraticQ q_function() const { return lq_q(psi(), gamma); }

  /// Long-run average reward of the optimal policy without the entropy bonus.
  double mean_reward() const {
    return V - 0.5 * gamma * std::log(2.0 * std::numbers::pi * std::numbers::e * policy.var);
  }

  ParameterSnapshot snapshot() const {
    return {"lq_ergodic", to_std_vector(theta()), to_std_vector(psi()), gamma, std::nullopt, V, true};
  }
};

/// Closed-form fixed point of policy evaluation and Gibbs improvement.
///
/// The x^2 coefficient gives a quadratic in k2. Roots must leave the
/// Hamiltonian concave in a and the closed loop mean-square stable; among
/// survivors the one with the largest V is returned.
inline LqErgodicSolution lq_ergodic_fixed_point(const LqParams& p, double gamma) {
  if (!(gamma > 0.0)) throw ContractError("lq_ergodic_fixed_point: gamma must be positive");
  const double s = p.B + p.C * p.D;
  const double g = 2.0 * p.A + p.C * p.C;
  const double a2 = -4.0 * p.D * p.D * g + 4.0 * s * s;
  const double a1 = 2.0 * p.N * g + 2.0 * p.M * p.D * p.D - 4.0 * s * p.R;
  const double a0 = p.R * p.R - p.M * p.N;

  std::vector<double> roots;
  const double scale = std::abs(a0) + std::abs(a1) + std::abs(a2);
  if (std::abs(a2) <= 1e-14 * scale) {
    if (a1 == 0.0) throw InfeasibleProblem("lq_ergodic_fixed_point: degenerate coefficient equation");
    roots.push_back(-a0 / a1);
  } else {
    const double disc = a1 * a1 - 4.0 * a2 * a0;
    if (disc < 0.0) throw InfeasibleProblem("lq_ergodic_fixed_point: no real root");
    const double sq = std::sqrt(disc);
    // Cancellation-free pair of roots.
    const double qq = -0.5 * (a1 + std::copysign(sq, a1));
    roots.push_back(qq / a2);
    if (qq != 0.0) roots.push_back(a0 / qq);
  }

  std::optional<LqErgodicSolution> best;
  for (double k2 : roots) {
    const double curv = p.N - 2.0 * p.D * p.D * k2;
    if (!(curv > 0.0)) continue;
    const double ell1 = 2.0 * k2 * s - p.R;
    const double slope = ell1 / curv;
    if (!lq_mean_square_stable(p, slope)) continue;
    const double e = 2.0 * k2 * (p.B + (p.C + p.D * slope) * p.D) - p.R - p.N * slope;
    const double k1 = (p.P + p.Q * slope + e * p.Q / curv) / (p.A + p.B * slope + e * p.B / curv);
    LqErgodicSolution sol;
    sol.params = p;
    sol.gamma = gamma;
    sol.k2 = k2;
    sol.k1 = k1;
    sol.policy = {slope, (p.B * k1 - p.Q) / curv, gamma / curv};
    sol.V = lq_evaluate_policy(p, gamma, sol.policy).V;
    if (!best || sol.V > best->V) best = sol;
  }
  if (!best) throw InfeasibleProblem("lq_ergodic_fixed_point: no stabilizing root");
  return *best;
}

/// Residual of the ergodic Feynman–Kac identity at x:
/// integral of (H(x,a,J',J'') - gamma log pi(a|x)) pi(a|x) da - V,
/// integrated by Gauss–Hermite against the policy.
template <SmoothValueApprox J, GaussianPolicyLike P>
double feynman_kac_residual(const ScalarEnv& model, const J& value, const P& policy, double gamma, double V, double x) {
  const auto xs = scalar_state(x);
  const double m = policy.mean(0.0, xs)(0);
  const double v = policy.variance(0.0, xs)(0, 0);
  const auto p = value.state_gradient(0.0, xs);
  const auto h = value.state_hessian(0.0, xs);
  const double avg = gaussian_expectation(
      [&](double a) {
        const auto as = scalar_action(a);
        return hamiltonian(model, 0.0, xs, as, p, h) - gamma * policy_log_density(policy, 0.0, xs, as);
      },
      m, v, 20);
  return avg - V;
}

// ---------------------------------------------------------------------------
// Policy improvement for general models

/// The Gaussian exp{H(t, x, ., dJ/dx, d2J/dx2) / gamma} / Z for a Hamiltonian
/// that is quadratic in the action. The quadratic is identified exactly from
/// evaluations at 0, +-e_i and e_i + e_j.
template <class Env, SmoothValueApprox J>
struct ImprovedPolicy {
  using State = typename Env::State;
  using Action = typename Env::Action;
  using Covariance = Eigen::Matrix<double, Env::kActionDim, Env::kActionDim>;

  Env model;
  J value;
  double gamma = 0.0;

  struct Quadratic {
    Action grad;
    Covariance neg_hess;
  };

  Quadratic identify(double t, const State& x) const {
    const auto p = value.state_gradient(t, x);
    const auto qh = value.state_hessian(t, x);
    const int m = model.action_dim;
    auto h = [&](const Action& a) { return hamiltonian(model, t, x, a, p, qh); };
    const Action zero = Action::Zero(m);
    const double h0 = h(zero);
    Quadratic out{Action::Zero(m), Covariance::Zero(m, m)};
    std::vector<double> hp(m), hm(m);
    for (int i = 0; i < m; ++i) {
      Action e = zero;
      e(i) = 1.0;
      hp[i] = h(e);
      hm[i] = h(-e);
      out.grad(i) = 0.5 * (hp[i] - hm[i]);
      out.neg_hess(i, i) = -(hp[i] + hm[i] - 2.0 * h0);
    }
    for (int i = 0; i < m; ++i) {
      for (int j = i + 1; j < m; ++j) {
        Action e = zero;
        e(i) = 1.0;
        e(j) = 1.0;
        const double hij = h(e) - hp[i] - hp[j] + h0;
        out.neg_hess(i, j) = out.neg_hess(j, i) = -hij;
      }
    }
    Eigen::LLT<Covariance> llt(out.neg_hess);
    if (llt.info() != Eigen::Success || !(out.neg_hess.diagonal().minCoeff() > 0.0))
      throw ImprovementUndefined("policy_improvement_map: Hamiltonian not strictly concave in the action");
    return out;
  }

  Action mean(double t, const State& x) const {
    const auto qd = identify(t, x);
    return qd.neg_hess.llt().solve(qd.grad);
  }

  Covariance variance(double t, const State& x) const {
    const auto qd = identify(t, x);
    const int m = model.action_dim;
    return gamma * qd.neg_hess.llt().solve(Covariance::Identity(m, m));
  }
};

/// Gibbs policy improvement map. Concavity is checked eagerly at the probe point and
/// again at every evaluation.
template <class Env, SmoothValueApprox J>
ImprovedPolicy<Env, J> policy_improvement_map(const Env& model, const J& value, double gamma, double probe_t = 0.0,
                                              std::optional<typename Env::State> probe_x = std::nullopt) {
  if (!(gamma > 0.0)) throw ContractError("policy_improvement_map: gamma must be positive");
  ImprovedPolicy<Env, J> out{model, value, gamma};
  const auto x = probe_x ? *probe_x : Env::State::Zero(model.state_dim);
  (void)out.identify(probe_t, x);
  return out;
}

// ---------------------------------------------------------------------------
// Q_dt expansion

struct QdtExpansionResult {
  std::vector<double> dts;
  /// (Q_dt - J) / dt per step size and its Monte Carlo standard error.
  std::vector<double> ratios;
  std::vector<double> std_errors;
  double intercept = 0.0;
  double slope = 0.0;
};

struct QdtExpansionOptions {
  std::vector<double> dts{0.1, 0.05, 0.025};
  int paths = 100000;
  int substeps = 16;
  double beta = 0.0;
  /// Long-run average subtracted from the reward rate (ergodic tasks).
  double V = 0.0;
};

/// Monte Carlo estimate of Q_dt(t,x,a) = E[int_t^{t+dt} e^{-beta(s-t)}(r - V) ds
/// + e^{-beta dt} J(t+dt, X)] with the action held at a, followed by an OLS fit
/// of (Q_dt - J)/dt against dt. The intercept estimates q(t,x,a). Once J is
/// fixed the continuation policy does not enter.
template <class Env, ValueApprox J>
QdtExpansionResult qdt_expansion_check(const Env& model, const J& value, double t, const typename Env::State& x,
                                       const typename Env::Action& a, const QdtExpansionOptions& opt,
                                       RngStream rng) {
  if (opt.dts.size() < 2) throw ContractError("qdt_expansion_check: need at least two step sizes");
  if (opt.paths < 2 || opt.substeps < 1) throw ContractError("qdt_expansion_check: invalid path settings");
  QdtExpansionResult out;
  out.dts = opt.dts;
  const double j0 = value.value(t, x);
  for (double dt : opt.dts) {
    const double h = dt / opt.substeps;
    double sum = 0.0, sum2 = 0.0;
    for (int n = 0; n < opt.paths; ++n) {
      typename Env::State y = x;
      double acc = 0.0;
      for (int s = 0; s < opt.substeps; ++s) {
        const double ts = t + s * h;
        const auto dW = draw_increment(model, h, rng);
        const auto st = step_euler(model, ts, y, a, h, dW);
        acc += std::exp(-opt.beta * s * h) * (st.reward_rate - opt.V) * h;
        y = st.x_next;
      }
      const double sample = (acc + std::exp(-opt.beta * dt) * value.value(t + dt, y) - j0) / dt;
      sum += sample;
      sum2 += sample * sample;
    }
    const double n = static_cast<double>(opt.paths);
    const double mean = sum / n;
    const double var = std::max(0.0, (sum2 - n * mean * mean) / (n - 1.0));
    out.ratios.push_back(mean);
    out.std_errors.push_back(std::sqrt(var / n));
  }
  const double n = static_cast<double>(out.dts.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < out.dts.size(); ++i) {
    mx += out.dts[i] / n;
    my += out.ratios[i] / n;
  }
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < out.dts.size(); ++i) {
    sxy += (out.dts[i] - mx) * (out.ratios[i] - my);
    sxx += (out.dts[i] - mx) * (out.dts[i] - mx);
  }
  out.slope = sxx > 0.0 ? sxy / sxx : 0.0;
  out.intercept = my - out.slope * mx;
  return out;
}

}  // namespace contq
