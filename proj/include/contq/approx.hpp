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
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "contq/envsim.hpp"
#include "contq/errors.hpp"
#include "contq/rng.hpp"

namespace contq {

template <int L>
using ParamVec = Eigen::Matrix<double, L, 1>;

using Scalar1 = Eigen::Matrix<double, 1, 1>;

// ---------------------------------------------------------------------------
// Concepts

/// J^theta(t, x) with its parameter gradient.
template <class F>
concept ValueApprox = requires(const F& f, double t, const typename F::State& x) {
  typename F::State;
  typename F::Params;
  { f.theta } -> std::convertible_to<typename F::Params>;
  { f.value(t, x) } -> std::convertible_to<double>;
  { f.grad_theta(t, x) } -> std::convertible_to<typename F::Params>;
};

/// A value approximator that also exposes dJ/dt, dJ/dx and d2J/dx2, which the
/// model-based oracles need.
template <class F>
concept SmoothValueApprox = ValueApprox<F> && requires(const F& f, double t, const typename F::State& x) {
  { f.time_derivative(t, x) } -> std::convertible_to<double>;
  { f.state_gradient(t, x) } -> std::convertible_to<typename F::State>;
  { f.state_hessian(t, x) } -> std::convertible_to<typename F::Hessian>;
};

/// Anything with a Gaussian action distribution at each (t, x).
template <class P>
concept GaussianPolicyLike = requires(const P& p, double t, const typename P::State& x) {
  typename P::State;
  typename P::Action;
  typename P::Covariance;
  { p.mean(t, x) } -> std::convertible_to<typename P::Action>;
  { p.variance(t, x) } -> std::convertible_to<typename P::Covariance>;
};

/// q^psi(t,x,a) = -1/2 (a - q1)' q2 (a - q1) + q0 with q0 fixed so that
/// exp(q / gamma) integrates to one over actions.
template <class F>
concept GaussianQApprox =
    GaussianPolicyLike<F> && requires(const F& f, double t, const typename F::State& x, const typename F::Action& a) {
      typename F::Params;
      { f.psi } -> std::convertible_to<typename F::Params>;
      { f.gamma } -> std::convertible_to<double>;
      { f.precision(t, x) } -> std::convertible_to<typename F::Covariance>;
      { f.value(t, x, a) } -> std::convertible_to<double>;
      { f.grad_psi(t, x, a) } -> std::convertible_to<typename F::Params>;
    };

// ---------------------------------------------------------------------------
// Gaussian helpers

/// Normalizer q0 for q = -1/2 (a - q1)' q2 (a - q1) + q0 with policy
/// N(q1, gamma q2^{-1}): q0 = (gamma/2) log det q2 - (m gamma/2) log(2 pi gamma).
template <class Matrix>
double gaussian_q_normalizer(const Matrix& q2, double gamma) {
  if (!(gamma > 0.0)) throw ContractError("gaussian_q_normalizer: gamma must be positive");
  const auto m = static_cast<double>(q2.rows());
  if (q2.rows() == 1) {
    if (!(q2(0, 0) > 0.0)) throw DomainError("gaussian_q_normalizer: q2 not positive definite");
    return 0.5 * gamma * std::log(q2(0, 0)) - 0.5 * m * gamma * std::log(2.0 * std::numbers::pi * gamma);
  }
  Eigen::LLT<Eigen::MatrixXd> llt(q2);
  if (llt.info() != Eigen::Success || !q2.isApprox(q2.transpose()))
    throw DomainError("gaussian_q_normalizer: q2 not symmetric positive definite");
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return 0.5 * gamma * logdet - 0.5 * m * gamma * std::log(2.0 * std::numbers::pi * gamma);
}

/// Generic evaluation of the normalized Gaussian q-function.
template <class Action, class Matrix>
double gaussian_q_value(const Action& q1, const Matrix& q2, double gamma, const Action& a) {
  const Action e = a - q1;
  return -0.5 * e.dot(q2 * e) + gaussian_q_normalizer(q2, gamma);
}

template <class Matrix>
Matrix cholesky_factor(const Matrix& v) {
  if constexpr (Matrix::RowsAtCompileTime == 1) {
    if (!(v(0, 0) > 0.0) || !std::isfinite(v(0, 0))) throw DomainError("cholesky: variance not positive");
    return Matrix::Constant(std::sqrt(v(0, 0)));
  } else {
    Eigen::LLT<Matrix> llt(v);
    if (llt.info() != Eigen::Success) throw DomainError("cholesky: variance not positive definite");
    return llt.matrixL();
  }
}

/// a = mean + chol(variance) xi, xi ~ N(0, I) from the stream.
template <GaussianPolicyLike P>
typename P::Action policy_sample(const P& policy, double t, const typename P::State& x, RngStream& rng) {
  typename P::Action mu = policy.mean(t, x);
  const auto cov = policy.variance(t, x);
  if constexpr (P::Action::RowsAtCompileTime == 1) {
    if (!(cov(0, 0) > 0.0) || !std::isfinite(cov(0, 0))) throw DomainError("policy_sample: variance not positive");
    mu(0) += std::sqrt(cov(0, 0)) * rng.normal();
    return mu;
  } else {
    const auto L = cholesky_factor(cov);
    typename P::Action xi(mu.size());
    for (Eigen::Index i = 0; i < mu.size(); ++i) xi(i) = rng.normal();
    return mu + L * xi;
  }
}

template <GaussianPolicyLike P>
double policy_log_density(const P& policy, double t, const typename P::State& x, const typename P::Action& a) {
  const auto mu = policy.mean(t, x);
  const auto cov = policy.variance(t, x);
  const double m = static_cast<double>(mu.size());
  if constexpr (P::Action::RowsAtCompileTime == 1) {
    const double v = cov(0, 0);
    if (!(v > 0.0)) throw DomainError("policy_log_density: variance not positive");
    const double e = a(0) - mu(0);
    return -0.5 * std::log(2.0 * std::numbers::pi * v) - 0.5 * e * e / v;
  } else {
    Eigen::LLT<typename P::Covariance> llt(cov);
    if (llt.info() != Eigen::Success) throw DomainError("policy_log_density: variance not positive definite");
    const typename P::Action e = a - mu;
    const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    return -0.5 * m * std::log(2.0 * std::numbers::pi) - 0.5 * logdet - 0.5 * e.dot(llt.solve(e));
  }
}

/// Differential entropy 1/2 log det(2 pi e Sigma).
template <GaussianPolicyLike P>
double policy_entropy(const P& policy, double t, const typename P::State& x) {
  const auto cov = policy.variance(t, x);
  const double m = static_cast<double>(cov.rows());
  const auto L = cholesky_factor(cov);
  const double logdet = 2.0 * L.diagonal().array().log().sum();
  return 0.5 * m * std::log(2.0 * std::numbers::pi * std::numbers::e) + 0.5 * logdet;
}

/// Adapts a Gaussian policy to the simulator's sampling-policy interface.
template <GaussianPolicyLike P>
auto sampler(const P& policy) {
  return [&policy](double t, const typename P::State& x, RngStream& rng) { return policy_sample(policy, t, x, rng); };
}

/// The policy exp(q / gamma) induced by a Gaussian q-function.
template <GaussianQApprox Q>
struct InducedPolicy {
  using State = typename Q::State;
  using Action = typename Q::Action;
  using Covariance = typename Q::Covariance;

  const Q* q;

  Action mean(double t, const State& x) const { return q->mean(t, x); }
  Covariance variance(double t, const State& x) const { return q->variance(t, x); }
};

template <GaussianQApprox Q>
InducedPolicy<Q> induced_policy(const Q& q) {
  return {&q};
}

// ---------------------------------------------------------------------------
// Value families

/// Flips a cost-to-go parameterization into reward convention (J -> -J).
template <ValueApprox F>
struct NegatedValue : F {
  using typename F::Params;
  using typename F::State;

  NegatedValue() = default;
  explicit NegatedValue(F inner) : F(std::move(inner)) {}

  double value(double t, const State& x) const { return -F::value(t, x); }
  Params grad_theta(double t, const State& x) const { return -F::grad_theta(t, x); }
  double terminal_value(const State& x) const
    requires requires(const F& f) { f.terminal_value(x); }
  {
    return -F::terminal_value(x);
  }
  double time_derivative(double t, const State& x) const
    requires SmoothValueApprox<F>
  {
    return -F::time_derivative(t, x);
  }
  State state_gradient(double t, const State& x) const
    requires SmoothValueApprox<F>
  {
    return -F::state_gradient(t, x);
  }
  typename F::Hessian state_hessian(double t, const State& x) const
    requires SmoothValueApprox<F>
  {
    return -F::state_hessian(t, x);
  }
};

/// J(t, x; w) = (x - w)^2 e^{-theta3 (T - t)} + theta2 (t^2 - T^2)
///              + theta1 (t - T) - (w - z)^2.
/// J(T, x) = (x - w)^2 - (w - z)^2 for every theta.
struct MeanVarianceValue {
  using State = ScalarEnv::State;
  using Params = ParamVec<3>;
  using Hessian = Scalar1;
  static constexpr bool kTerminalPinned = true;

  Params theta = Params::Zero();
  double w = 0.0;
  double z = 0.0;
  double horizon = 1.0;

  double value(double t, const State& x) const {
    const double tau = horizon - t;
    const double y = x(0) - w;
    return y * y * std::exp(-theta(2) * tau) + theta(1) * (t * t - horizon * horizon) + theta(0) * (t - horizon) -
           (w - z) * (w - z);
  }

  Params grad_theta(double t, const State& x) const {
    const double tau = horizon - t;
    const double y = x(0) - w;
    return {t - horizon, t * t - horizon * horizon, -tau * y * y * std::exp(-theta(2) * tau)};
  }

  double terminal_value(const State& x) const { return (x(0) - w) * (x(0) - w) - (w - z) * (w - z); }

  double time_derivative(double t, const State& x) const {
    const double y = x(0) - w;
    return theta(2) * y * y * std::exp(-theta(2) * (horizon - t)) + 2.0 * theta(1) * t + theta(0);
  }
  State state_gradient(double t, const State& x) const {
    return State::Constant(2.0 * (x(0) - w) * std::exp(-theta(2) * (horizon - t)));
  }
  Hessian state_hessian(double t, const State&) const {
    return Hessian::Constant(2.0 * std::exp(-theta(2) * (horizon - t)));
  }
};

inline MeanVarianceValue mv_value(const ParamVec<3>& theta, double w, double z, double horizon) {
  return {theta, w, z, horizon};
}

/// Ergodic quadratic J(x) = theta1 x^2 + theta2 x (no constant: J is only
/// defined up to one).
struct QuadraticValue {
  using State = ScalarEnv::State;
  using Params = ParamVec<2>;
  using Hessian = Scalar1;
  static constexpr bool kTerminalPinned = false;

  Params theta = Params::Zero();

  double value(double, const State& x) const { return theta(0) * x(0) * x(0) + theta(1) * x(0); }
  Params grad_theta(double, const State& x) const { return {x(0) * x(0), x(0)}; }
  double time_derivative(double, const State&) const { return 0.0; }
  State state_gradient(double, const State& x) const { return State::Constant(2.0 * theta(0) * x(0) + theta(1)); }
  Hessian state_hessian(double, const State&) const { return Hessian::Constant(2.0 * theta(0)); }
};

inline QuadraticValue lq_value(const ParamVec<2>& theta) { return {theta}; }

/// User-supplied value family over dynamic parameters.
template <class StateT>
struct CustomValueApprox {
  using State = StateT;
  using Params = Eigen::VectorXd;

  Params theta;
  std::function<double(const Params&, double, const State&)> eval;
  std::function<Params(const Params&, double, const State&)> grad;

  double value(double t, const State& x) const { return eval(theta, t, x); }
  Params grad_theta(double t, const State& x) const { return grad(theta, t, x); }
};

// ---------------------------------------------------------------------------
// q families

/// q(t,x,a;w) = -(e^{-psi1 - psi3 (T-t)} / 2)(a + psi2 (x - w))^2
///              - (gamma/2)[log 2 pi gamma + psi1 + psi3 (T - t)],
/// inducing N(-psi2 (x - w), gamma e^{psi1 + psi3 (T - t)}).
struct MeanVarianceQ {
  using State = ScalarEnv::State;
  using Action = ScalarEnv::Action;
  using Covariance = Scalar1;
  using Params = ParamVec<3>;

  Params psi = Params::Zero();
  double w = 0.0;
  double gamma = 0.1;
  double horizon = 1.0;

  double log_scale(double t) const { return psi(0) + psi(2) * (horizon - t); }

  Action mean(double, const State& x) const { return Action::Constant(-psi(1) * (x(0) - w)); }
  Covariance precision(double t, const State&) const { return Covariance::Constant(std::exp(-log_scale(t))); }
  Covariance variance(double t, const State&) const { return Covariance::Constant(gamma * std::exp(log_scale(t))); }

  double value(double t, const State& x, const Action& a) const {
    const double s = log_scale(t);
    const double e = a(0) + psi(1) * (x(0) - w);
    return -0.5 * std::exp(-s) * e * e - 0.5 * gamma * (std::log(2.0 * std::numbers::pi * gamma) + s);
  }

  Params grad_psi(double t, const State& x, const Action& a) const {
    const double s = log_scale(t);
    const double p = std::exp(-s);
    const double y = x(0) - w;
    const double e = a(0) + psi(1) * y;
    const double d_scale = 0.5 * p * e * e - 0.5 * gamma;
    return {d_scale, -p * e * y, (horizon - t) * d_scale};
  }
};

inline MeanVarianceQ mv_q(const ParamVec<3>& psi, double w, double gamma, double horizon) {
  if (!(gamma > 0.0)) throw ContractError("mv_q: gamma must be positive");
  return {psi, w, gamma, horizon};
}

/// q(x,a) = -(e^{-psi3}/2)(a - psi1 x - psi2)^2 - (gamma/2)(log 2 pi gamma + psi3),
/// inducing N(psi1 x + psi2, gamma e^{psi3}).
struct QuadraticQ {
  using State = ScalarEnv::State;
  using Action = ScalarEnv::Action;
  using Covariance = Scalar1;
  using Params = ParamVec<3>;

  Params psi = Params::Zero();
  double gamma = 0.1;

  Action mean(double, const State& x) const { return Action::Constant(psi(0) * x(0) + psi(1)); }
  Covariance precision(double, const State&) const { return Covariance::Constant(std::exp(-psi(2))); }
  Covariance variance(double, const State&) const { return Covariance::Constant(gamma * std::exp(psi(2))); }

  double value(double, const State& x, const Action& a) const {
    const double e = a(0) - psi(0) * x(0) - psi(1);
    return -0.5 * std::exp(-psi(2)) * e * e - 0.5 * gamma * (std::log(2.0 * std::numbers::pi * gamma) + psi(2));
  }

  Params grad_psi(double, const State& x, const Action& a) const {
    const double p = std::exp(-psi(2));
    const double e = a(0) - psi(0) * x(0) - psi(1);
    return {p * e * x(0), p * e, 0.5 * p * e * e - 0.5 * gamma};
  }
};

inline QuadraticQ lq_q(const ParamVec<3>& psi, double gamma) {
  if (!(gamma > 0.0)) throw ContractError("lq_q: gamma must be positive");
  return {psi, gamma};
}

/// User-supplied Gaussian q family: the caller provides the mean map q1, the
/// precision map q2 and the psi-gradient; the normalizer is added here.
template <class StateT, class ActionT>
struct CustomGaussianQ {
  using State = StateT;
  using Action = ActionT;
  using Covariance = Eigen::Matrix<double, ActionT::RowsAtCompileTime, ActionT::RowsAtCompileTime>;
  using Params = Eigen::VectorXd;

  Params psi;
  double gamma = 0.1;
  std::function<Action(const Params&, double, const State&)> q1;
  std::function<Covariance(const Params&, double, const State&)> q2;
  std::function<Params(const Params&, double, const State&, const Action&)> grad;

  Action mean(double t, const State& x) const { return q1(psi, t, x); }
  Covariance precision(double t, const State& x) const { return q2(psi, t, x); }
  Covariance variance(double t, const State& x) const { return gamma * q2(psi, t, x).inverse(); }
  double value(double t, const State& x, const Action& a) const {
    return gaussian_q_value(q1(psi, t, x), q2(psi, t, x), gamma, a);
  }
  Params grad_psi(double t, const State& x, const Action& a) const { return grad(psi, t, x, a); }
};

// ---------------------------------------------------------------------------
// Parameter snapshots

/// JSON-serializable record of a learned (or oracle) parameter set.
struct ParameterSnapshot {
  std::string name;
  std::vector<double> theta;
  std::vector<double> psi;
  double gamma = 0.0;
  std::optional<double> w;
  std::optional<double> V;
  bool oracle = false;
};

template <class V>
std::vector<double> to_std_vector(const V& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

inline void to_json(nlohmann::json& j, const ParameterSnapshot& s) {
  j = nlohmann::json{{"name", s.name}, {"theta", s.theta}, {"psi", s.psi}, {"gamma", s.gamma}};
  if (s.w) j["w"] = *s.w;
  if (s.V) j["V"] = *s.V;
  if (s.oracle) j["oracle"] = true;
}

inline void from_json(const nlohmann::json& j, ParameterSnapshot& s) {
  j.at("name").get_to(s.name);
  j.at("theta").get_to(s.theta);
  j.at("psi").get_to(s.psi);
  j.at("gamma").get_to(s.gamma);
  s.w = j.contains("w") ? std::optional<double>(j.at("w").get<double>()) : std::nullopt;
  s.V = j.contains("V") ? std::optional<double>(j.at("V").get<double>()) : std::nullopt;
  s.oracle = j.value("oracle", false);
}

}  // namespace contq
