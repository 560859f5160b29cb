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
#include <functional>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/LU>

#include "contq/approx.hpp"
#include "contq/envsim.hpp"
#include "contq/errors.hpp"

namespace contq {

// ---------------------------------------------------------------------------
// Learning-rate schedules

/// l(j) = j^{-power} for episode index j >= 1.
inline double episode_power_schedule(double j, double power = 0.51) {
  return std::pow(std::max(j, 1.0), -power);
}

/// l(t) = 1 / max{1, sqrt(log t)}; equal to 1 for t <= e (and t = 0).
inline double log_time_schedule(double t) {
  if (!(t > std::numbers::e)) return 1.0;
  return 1.0 / std::max(1.0, std::sqrt(std::log(t)));
}

/// Inner sum of the martingale-loss psi gradient: the integral of dq/dpsi
/// over [t_k, T] evaluated along the path, or the variant that repeats the
/// gradient at t_k.
enum class MlInnerSum { kDisplay, kBox };

struct LearnerConfig {
  double gamma = 0.1;
  double alpha_theta = 0.001;
  double alpha_psi = 0.001;
  double alpha_V = 0.001;
  double alpha_w = 0.005;
  double alpha_phi = 0.001;
  std::function<double(double)> schedule = [](double) { return 1.0; };
  MlInnerSum ml_inner_sum = MlInnerSum::kDisplay;
  /// Parameters with magnitude beyond this count as diverged.
  double divergence_bound = std::numeric_limits<double>::infinity();

  double rate(double arg) const { return schedule ? schedule(arg) : 1.0; }
};

/// History-dependent test functions xi_k, zeta_k on a stored trajectory.
/// Empty members select the defaults dJ/dtheta and dq/dpsi at step k.
template <class Env, class J, class Q>
struct TestFunctions {
  std::function<typename J::Params(const Trajectory<Env>&, int)> xi;
  std::function<typename Q::Params(const Trajectory<Env>&, int)> zeta;
};

template <class J, class Q>
struct QLearnerParams {
  typename J::Params theta;
  typename Q::Params psi;
  double V = 0.0;
};

namespace detail {

template <class... Vs>
bool all_finite_within(double bound, const Vs&... vs) {
  return ((vs.allFinite() && (vs.size() == 0 || vs.cwiseAbs().maxCoeff() <= bound)) && ...);
}

template <class... Vs>
std::vector<double> concat(const Vs&... vs) {
  std::vector<double> out;
  (out.insert(out.end(), vs.data(), vs.data() + vs.size()), ...);
  return out;
}

template <class J, class Q>
QLearnerParams<J, Q> checked(QLearnerParams<J, Q> next, const QLearnerParams<J, Q>& prev, double bound) {
  if (!all_finite_within(bound, next.theta, next.psi) || !std::isfinite(next.V) || std::abs(next.V) > bound) {
    auto last = concat(prev.theta, prev.psi);
    last.push_back(prev.V);
    throw ParameterDiverged(std::move(last));
  }
  return next;
}

template <class Env, class J>
double terminal_target(const Trajectory<Env>& traj, const J& value) {
  if (traj.terminal_payoff) return *traj.terminal_payoff;
  return value.value(traj.times.back(), traj.states.back());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Martingale loss

/// G_{t_k:T} for k = 0..K-1, by the backward recursion
/// S_K = h(x_K), S_k = (r_k - q_k) dt + e^{-beta dt} S_{k+1}, G_k = S_k - J_k.
template <class Env, ValueApprox J, GaussianQApprox Q>
std::vector<double> martingale_residuals(const Trajectory<Env>& traj, const J& value, const Q& q, double beta) {
  if (!traj.terminal_payoff) throw ContractError("martingale loss needs a terminal payoff");
  const int K = traj.steps();
  const double dt = traj.dt();
  const double disc = std::exp(-beta * dt);
  std::vector<double> g(K);
  double s = *traj.terminal_payoff;
  for (int k = K - 1; k >= 0; --k) {
    const auto& x = traj.states[k];
    const double t = traj.times[k];
    s = (traj.rewards[k] - q.value(t, x, traj.actions[k])) * dt + disc * s;
    g[k] = s - value.value(t, x);
  }
  return g;
}

/// 1/2 sum_k G_{t_k:T}^2 dt.
template <class Env, ValueApprox J, GaussianQApprox Q>
double martingale_loss(const Trajectory<Env>& traj, const J& value, const Q& q, double beta) {
  const auto g = martingale_residuals(traj, value, q, beta);
  double acc = 0.0;
  for (double v : g) acc += v * v;
  return 0.5 * acc * traj.dt();
}

/// Raw (unscaled) martingale-loss ascent directions for one trajectory.
template <class Env, ValueApprox J, GaussianQApprox Q>
QLearnerParams<J, Q> ml_direction(const Trajectory<Env>& traj, const J& value, const Q& q, double beta,
                                  MlInnerSum mode) {
  const auto g = martingale_residuals(traj, value, q, beta);
  const int K = traj.steps();
  const double dt = traj.dt();
  const double disc = std::exp(-beta * dt);
  QLearnerParams<J, Q> d{value.theta * 0.0, q.psi * 0.0, 0.0};
  typename Q::Params inner = q.psi * 0.0;
  for (int k = K - 1; k >= 0; --k) {
    const auto& x = traj.states[k];
    const double t = traj.times[k];
    const auto dq = q.grad_psi(t, x, traj.actions[k]);
    if (mode == MlInnerSum::kDisplay) {
      inner = dq * dt + disc * inner;
      d.psi += inner * (g[k] * dt);
    } else {
      d.psi += dq * (static_cast<double>(K - k) * dt * g[k] * dt);
    }
    d.theta += value.grad_theta(t, x) * (g[k] * dt);
  }
  return d;
}

/// One martingale-loss gradient step on a batch, averaging the per-trajectory
/// directions. j is the episode index fed to the schedule.
template <class Env, ValueApprox J, GaussianQApprox Q>
QLearnerParams<J, Q> ml_update(std::span<const Trajectory<Env>> batch, const J& value, const Q& q,
                               const LearnerConfig& cfg, double beta, double j) {
  if (batch.empty()) throw ContractError("ml_update: empty batch");
  QLearnerParams<J, Q> sum{value.theta * 0.0, q.psi * 0.0, 0.0};
  for (const auto& traj : batch) {
    const auto d = ml_direction(traj, value, q, beta, cfg.ml_inner_sum);
    sum.theta += d.theta;
    sum.psi += d.psi;
  }
  const double l = cfg.rate(j) / static_cast<double>(batch.size());
  QLearnerParams<J, Q> prev{value.theta, q.psi, 0.0};
  QLearnerParams<J, Q> next{value.theta + (l * cfg.alpha_theta) * sum.theta, q.psi + (l * cfg.alpha_psi) * sum.psi,
                            0.0};
  return detail::checked(std::move(next), prev, cfg.divergence_bound);
}

template <class Env, ValueApprox J, GaussianQApprox Q>
QLearnerParams<J, Q> ml_update(const Trajectory<Env>& traj, const J& value, const Q& q, const LearnerConfig& cfg,
                               double beta, double j) {
  return ml_update(std::span<const Trajectory<Env>>(&traj, 1), value, q, cfg, beta, j);
}

// ---------------------------------------------------------------------------
// Temporal-difference increments

/// delta with its default test-function values.
template <class J, class Q>
struct TdIncrement {
  double delta = 0.0;
  typename J::Params xi;
  typename Q::Params zeta;
};

/// delta = J(t', x') - J(t, x) + r dt - q(t, x, a) dt - beta J(t, x) dt, with
/// xi = dJ/dtheta and zeta = dq/dpsi at (t, x, a). next_value overrides
/// J(t', x') (terminal payoff on the last step of an episode).
template <class Env, ValueApprox J, GaussianQApprox Q>
TdIncrement<J, Q> td_increment(const Transition<Env>& tr, const J& value, const Q& q, double beta,
                               std::optional<double> next_value = std::nullopt) {
  const double j0 = value.value(tr.t, tr.x);
  const double j1 = next_value ? *next_value : value.value(tr.t + tr.dt, tr.x_next);
  TdIncrement<J, Q> out;
  out.delta = j1 - j0 + tr.r * tr.dt - q.value(tr.t, tr.x, tr.a) * tr.dt - beta * j0 * tr.dt;
  out.xi = value.grad_theta(tr.t, tr.x);
  out.zeta = q.grad_psi(tr.t, tr.x, tr.a);
  return out;
}

/// Ergodic form: delta = J(x') - J(x) + r dt - q(x, a) dt - V dt.
template <class Env, ValueApprox J, GaussianQApprox Q>
TdIncrement<J, Q> ergodic_td_increment(const Transition<Env>& tr, const J& value, const Q& q, double V) {
  TdIncrement<J, Q> out;
  out.delta = value.value(tr.t + tr.dt, tr.x_next) - value.value(tr.t, tr.x) + tr.r * tr.dt -
              q.value(tr.t, tr.x, tr.a) * tr.dt - V * tr.dt;
  out.xi = value.grad_theta(tr.t, tr.x);
  out.zeta = q.grad_psi(tr.t, tr.x, tr.a);
  return out;
}

/// Sums sum_i xi_i delta_i and sum_i zeta_i delta_i over one trajectory.
template <class Env, ValueApprox J, GaussianQApprox Q>
QLearnerParams<J, Q> td_moments(const Trajectory<Env>& traj, const J& value, const Q& q, double beta,
                                const TestFunctions<Env, J, Q>& tests = {}) {
  const int K = traj.steps();
  QLearnerParams<J, Q> m{value.theta * 0.0, q.psi * 0.0, 0.0};
  for (int k = 0; k < K; ++k) {
    const auto tr = traj.transition(k);
    const auto inc = td_increment(tr, value, q, beta,
                                  (k == K - 1 && traj.terminal_payoff) ? traj.terminal_payoff : std::nullopt);
    m.theta += (tests.xi ? tests.xi(traj, k) : inc.xi) * inc.delta;
    m.psi += (tests.zeta ? tests.zeta(traj, k) : inc.zeta) * inc.delta;
  }
  return m;
}

/// Offline TD with test functions, averaged over a batch.
template <class Env, ValueApprox J, GaussianQApprox Q>
QLearnerParams<J, Q> offline_td_update(std::span<const Trajectory<Env>> batch, const J& value, const Q& q,
                                       const LearnerConfig& cfg, double beta, double j,
                                       const TestFunctions<Env, J, Q>& tests = {}) {
  if (batch.empty()) throw ContractError("offline_td_update: empty batch");
  QLearnerParams<J, Q> sum{value.theta * 0.0, q.psi * 0.0, 0.0};
  for (const auto& traj : batch) {
    const auto m = td_moments(traj, value, q, beta, tests);
    sum.theta += m.theta;
    sum.psi += m.psi;
  }
  const double l = cfg.rate(j) / static_cast<double>(batch.size());
  QLearnerParams<J, Q> prev{value.theta, q.psi, 0.0};
  QLearnerParams<J, Q> next{value.theta + (l * cfg.alpha_theta) * sum.theta, q.psi + (l * cfg.alpha_psi) * sum.psi,
                            0.0};
  return detail::checked(std::move(next), prev, cfg.divergence_bound);
}

template <class Env, ValueApprox J, GaussianQApprox Q>
QLearnerParams<J, Q> offline_td_update(const Trajectory<Env>& traj, const J& value, const Q& q,
                                       const LearnerConfig& cfg, double beta, double j,
                                       const TestFunctions<Env, J, Q>& tests = {}) {
  return offline_td_update(std::span<const Trajectory<Env>>(&traj, 1), value, q, cfg, beta, j, tests);
}

/// Online incremental update on one transition with the default test
/// functions.
template <class Env, ValueApprox J, GaussianQApprox Q>
QLearnerParams<J, Q> online_td_update(const Transition<Env>& tr, const J& value, const Q& q,
                                      const LearnerConfig& cfg, double beta, double j,
                                      std::optional<double> next_value = std::nullopt) {
  const auto inc = td_increment(tr, value, q, beta, next_value);
  const double l = cfg.rate(j);
  QLearnerParams<J, Q> prev{value.theta, q.psi, 0.0};
  QLearnerParams<J, Q> next{value.theta + (l * cfg.alpha_theta * inc.delta) * inc.xi,
                            q.psi + (l * cfg.alpha_psi * inc.delta) * inc.zeta, 0.0};
  return detail::checked(std::move(next), prev, cfg.divergence_bound);
}

/// Ergodic q-learning step; the schedule is evaluated at elapsed time.
template <class Env, ValueApprox J, GaussianQApprox Q>
QLearnerParams<J, Q> ergodic_update(const Transition<Env>& tr, const J& value, const Q& q, double V,
                                    const LearnerConfig& cfg, double elapsed) {
  const auto inc = ergodic_td_increment(tr, value, q, V);
  const double l = cfg.rate(elapsed);
  QLearnerParams<J, Q> prev{value.theta, q.psi, V};
  QLearnerParams<J, Q> next{value.theta + (l * cfg.alpha_theta * inc.delta) * inc.xi,
                            q.psi + (l * cfg.alpha_psi * inc.delta) * inc.zeta, V + l * cfg.alpha_V * inc.delta};
  return detail::checked(std::move(next), prev, cfg.divergence_bound);
}

// ---------------------------------------------------------------------------
// GMM

/// Weighting (E-hat[sum_k f_k f_k' dt])^{-1} for a test function on a batch.
template <class Env, class F>
Eigen::MatrixXd gmm_weight(std::span<const Trajectory<Env>> batch, F test_fn) {
  Eigen::MatrixXd acc;
  for (const auto& traj : batch) {
    for (int k = 0; k < traj.steps(); ++k) {
      const Eigen::VectorXd f = test_fn(traj, k);
      if (acc.size() == 0) acc = Eigen::MatrixXd::Zero(f.size(), f.size());
      acc += f * f.transpose() * traj.dt();
    }
  }
  if (acc.size() == 0) throw ContractError("gmm_weight: empty batch");
  acc /= static_cast<double>(batch.size());
  Eigen::FullPivLU<Eigen::MatrixXd> lu(acc);
  if (!lu.isInvertible()) throw DomainError("gmm_weight: singular moment matrix");
  return lu.inverse();
}

struct GmmValue {
  double theta = 0.0;
  double psi = 0.0;
};

/// m' A m for the theta- and psi-moment vectors m = E-hat[sum_k test_k delta_k].
/// Empty weight matrices mean identity.
template <class Env, ValueApprox J, GaussianQApprox Q>
GmmValue gmm_objective(std::span<const Trajectory<Env>> batch, const J& value, const Q& q, double beta,
                       const Eigen::MatrixXd& a_theta = {}, const Eigen::MatrixXd& a_psi = {},
                       const TestFunctions<Env, J, Q>& tests = {}) {
  if (batch.empty()) throw ContractError("gmm_objective: empty batch");
  Eigen::VectorXd mt = Eigen::VectorXd::Zero(value.theta.size());
  Eigen::VectorXd mp = Eigen::VectorXd::Zero(q.psi.size());
  for (const auto& traj : batch) {
    const auto m = td_moments(traj, value, q, beta, tests);
    mt += Eigen::VectorXd(m.theta);
    mp += Eigen::VectorXd(m.psi);
  }
  mt /= static_cast<double>(batch.size());
  mp /= static_cast<double>(batch.size());
  auto form = [](const Eigen::VectorXd& m, const Eigen::MatrixXd& a) {
    if (a.size() == 0) return m.squaredNorm();
    if (a.rows() != m.size() || a.cols() != m.size()) throw ContractError("gmm_objective: weight shape mismatch");
    return m.dot(a * m);
  };
  return {form(mt, a_theta), form(mp, a_psi)};
}

}  // namespace contq
