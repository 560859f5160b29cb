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
#include <cstdint>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "contq/errors.hpp"
#include "contq/rng.hpp"

namespace contq {

/// States beyond this magnitude abort the episode.
inline constexpr double kDivergenceBound = 1e8;

/// A controlled diffusion dX = b(t,X,a) dt + sigma(t,X,a) dW with running
/// reward rate r, optional terminal payoff h and discount rate beta.
///
/// Dimensions are template parameters so the 1-D presets run on stack-sized
/// Eigen objects; pass Eigen::Dynamic and set the *_dim fields for runtime
/// sizes. A model without a terminal payoff is an ergodic (long-run average)
/// task and must have beta = 0.
template <int StateDim, int ActionDim, int NoiseDim>
struct EnvModel {
  static constexpr int kStateDim = StateDim;
  static constexpr int kActionDim = ActionDim;
  static constexpr int kNoiseDim = NoiseDim;

  using State = Eigen::Matrix<double, StateDim, 1>;
  using Action = Eigen::Matrix<double, ActionDim, 1>;
  using Noise = Eigen::Matrix<double, NoiseDim, 1>;
  using Diffusion = Eigen::Matrix<double, StateDim, NoiseDim>;

  std::function<State(double, const State&, const Action&)> drift;
  std::function<Diffusion(double, const State&, const Action&)> diffusion;
  std::function<double(double, const State&, const Action&)> reward_rate;
  std::function<double(const State&)> terminal_reward;
  double discount_beta = 0.0;

  int state_dim = StateDim > 0 ? StateDim : 0;
  int action_dim = ActionDim > 0 ? ActionDim : 0;
  int noise_dim = NoiseDim > 0 ? NoiseDim : 0;

  bool is_ergodic() const { return !terminal_reward; }

  void validate() const {
    if (!drift || !diffusion || !reward_rate) throw ContractError("EnvModel: missing drift, diffusion or reward");
    if (state_dim <= 0 || action_dim <= 0 || noise_dim <= 0)
      throw ContractError("EnvModel: dimensions must be positive");
    if (!(discount_beta >= 0.0)) throw ContractError("EnvModel: discount_beta must be >= 0");
    if (is_ergodic() && discount_beta != 0.0) throw ContractError("EnvModel: ergodic models are undiscounted");
  }
};

using ScalarEnv = EnvModel<1, 1, 1>;
using DynamicEnv = EnvModel<Eigen::Dynamic, Eigen::Dynamic, Eigen::Dynamic>;

template <class T>
concept EnvModelType = requires {
  typename T::State;
  typename T::Action;
  typename T::Noise;
  typename T::Diffusion;
} && std::same_as<T, EnvModel<T::kStateDim, T::kActionDim, T::kNoiseDim>>;

/// Time grid of one episode.
struct EpisodeConfig {
  double horizon = 1.0;
  double dt = 0.01;
  int episode_count = 1;
  std::uint64_t seed = 0;
  int batch_size = 1;

  /// K = round(T / dt); rejects grids that do not tile the horizon.
  int grid_count() const {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ContractError("EpisodeConfig: dt must be positive");
    if (!(horizon > 0.0) || !std::isfinite(horizon)) throw ContractError("EpisodeConfig: empty episode");
    const double k = std::round(horizon / dt);
    if (k < 1.0) throw ContractError("EpisodeConfig: empty episode");
    if (std::abs(k * dt - horizon) >= 1e-12 * horizon) throw ContractError("EpisodeConfig: dt does not divide T");
    if (batch_size < 1) throw ContractError("EpisodeConfig: batch_size must be >= 1");
    return static_cast<int>(k);
  }
};

/// One observed step (t, x, a, r, x') on a grid of spacing dt. r is a rate.
template <class Env>
struct Transition {
  double t = 0.0;
  double dt = 0.0;
  typename Env::State x;
  typename Env::Action a;
  double r = 0.0;
  typename Env::State x_next;
};

/// Time-gridded record of one episode or observation stream.
template <class Env>
struct Trajectory {
  using State = typename Env::State;
  using Action = typename Env::Action;

  std::vector<double> times;
  std::vector<State> states;
  std::vector<Action> actions;
  std::vector<double> rewards;
  std::optional<double> terminal_payoff;
  bool off_policy = false;

  int steps() const { return static_cast<int>(actions.size()); }
  double dt() const { return times.size() > 1 ? times[1] - times[0] : 0.0; }
  double horizon_end() const { return times.back(); }

  Transition<Env> transition(int k) const {
    return {times[k], times[k + 1] - times[k], states[k], actions[k], rewards[k], states[k + 1]};
  }

  void validate() const {
    const auto k = actions.size();
    if (k == 0) throw ContractError("Trajectory: no steps");
    if (rewards.size() != k || states.size() != k + 1 || times.size() != k + 1)
      throw ContractError("Trajectory: inconsistent lengths");
    const double h = times[1] - times[0];
    if (!(h > 0.0)) throw ContractError("Trajectory: times must increase");
    for (std::size_t i = 1; i < times.size(); ++i) {
      const double d = times[i] - times[i - 1];
      if (!(d > 0.0) || std::abs(d - h) > 1e-12 * std::max(1.0, std::abs(times[i])))
        throw ContractError("Trajectory: non-uniform time grid");
    }
  }
};

template <class Env>
struct StepResult {
  typename Env::State x_next;
  double reward_rate = 0.0;
};

namespace detail {

template <class V>
std::vector<double> flatten(const V& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

}  // namespace detail

/// One Euler–Maruyama step: x' = x + b dt + sigma dW. The reward returned is
/// the rate r(t, x, a); integrators multiply by dt themselves.
template <class Env>
StepResult<Env> step_euler(const Env& model, double t, const typename Env::State& x,
                           const typename Env::Action& a, double dt, const typename Env::Noise& dW) {
  if (!(dt > 0.0)) throw ContractError("step_euler: dt must be positive");
  if (dW.size() != model.noise_dim) throw ContractError("step_euler: noise dimension mismatch");
  StepResult<Env> out;
  out.x_next = x + model.drift(t, x, a) * dt + model.diffusion(t, x, a) * dW;
  out.reward_rate = model.reward_rate(t, x, a);
  const bool finite = out.x_next.allFinite() && std::isfinite(out.reward_rate);
  if (!finite || out.x_next.cwiseAbs().maxCoeff() > kDivergenceBound)
    throw SimulationDiverged(t, detail::flatten(x), detail::flatten(a));
  return out;
}

/// Brownian increment N(0, dt I) drawn from the stream.
template <class Env>
typename Env::Noise draw_increment(const Env& model, double dt, RngStream& rng) {
  typename Env::Noise dW(model.noise_dim);
  const double s = std::sqrt(dt);
  for (int i = 0; i < model.noise_dim; ++i) dW(i) = s * rng.normal();
  return dW;
}

/// A stochastic policy: draws an action at (t, x) from the given stream.
template <class P, class Env>
concept SamplingPolicy = requires(P& p, double t, const typename Env::State& x, RngStream& rng) {
  { p(t, x, rng) } -> std::convertible_to<typename Env::Action>;
};

/// Step-by-step generator of (t, x, a, r, x') under a sampling policy. Each
/// step draws the action first, then the Brownian increment, from one stream,
/// so a stored episode and a live stream with the same seed agree exactly.
template <class Env, class Policy>
  requires SamplingPolicy<Policy, Env>
class TransitionStream {
 public:
  TransitionStream(const Env& model, Policy policy, double dt, typename Env::State x0, RngStream rng)
      : model_(&model), policy_(std::move(policy)), dt_(dt), x_(std::move(x0)), rng_(std::move(rng)) {
    if (!(dt > 0.0)) throw ContractError("TransitionStream: dt must be positive");
    if (!x_.allFinite()) throw ContractError("TransitionStream: x0 must be finite");
  }

  Transition<Env> next() {
    const double t = static_cast<double>(k_) * dt_;
    typename Env::Action a = policy_(t, x_, rng_);
    const auto dW = draw_increment(*model_, dt_, rng_);
    auto step = step_euler(*model_, t, x_, a, dt_, dW);
    Transition<Env> tr{t, dt_, x_, std::move(a), step.reward_rate, step.x_next};
    x_ = std::move(step.x_next);
    ++k_;
    return tr;
  }

  double time() const { return static_cast<double>(k_) * dt_; }
  std::int64_t step_index() const { return k_; }
  const typename Env::State& state() const { return x_; }
  Policy& policy() { return policy_; }

 private:
  const Env* model_;
  Policy policy_;
  double dt_;
  typename Env::State x_;
  RngStream rng_;
  std::int64_t k_ = 0;
};

namespace detail {

template <class Env, class Policy>
Trajectory<Env> collect_episode(const Env& model, Policy policy, const EpisodeConfig& cfg,
                                const typename Env::State& x0, RngStream rng, bool off_policy) {
  const int steps = cfg.grid_count();
  TransitionStream<Env, Policy> stream(model, std::move(policy), cfg.dt, x0, std::move(rng));
  Trajectory<Env> traj;
  traj.off_policy = off_policy;
  traj.times.reserve(steps + 1);
  traj.states.reserve(steps + 1);
  traj.actions.reserve(steps);
  traj.rewards.reserve(steps);
  traj.times.push_back(0.0);
  traj.states.push_back(x0);
  for (int k = 0; k < steps; ++k) {
    auto tr = stream.next();
    traj.actions.push_back(std::move(tr.a));
    traj.rewards.push_back(tr.r);
    traj.times.push_back(static_cast<double>(k + 1) * cfg.dt);
    traj.states.push_back(std::move(tr.x_next));
  }
  if (model.terminal_reward) traj.terminal_payoff = model.terminal_reward(traj.states.back());
  return traj;
}

}  // namespace detail

/// Runs one on-policy episode of K = T / dt steps.
template <class Env, class Policy>
  requires SamplingPolicy<Policy, Env>
Trajectory<Env> simulate_episode(const Env& model, Policy policy, const EpisodeConfig& cfg,
                                 const typename Env::State& x0, RngStream rng) {
  return detail::collect_episode(model, std::move(policy), cfg, x0, std::move(rng), false);
}

/// Same contract as simulate_episode, but the result is tagged as data from a
/// behavior policy that learners must treat as given.
template <class Env, class Policy>
  requires SamplingPolicy<Policy, Env>
Trajectory<Env> make_behavior_stream(const Env& model, Policy behavior, const EpisodeConfig& cfg,
                                     const typename Env::State& x0, RngStream rng) {
  return detail::collect_episode(model, std::move(behavior), cfg, x0, std::move(rng), true);
}

// ---------------------------------------------------------------------------
// Presets

/// Discounted wealth dX = a[(mu - r) dt + sigma dW]. No running reward; the
/// mean-variance experiment installs the Lagrange-shifted terminal payoff.
inline ScalarEnv builtin_mv_env(double mu, double sigma, double rfree = 0.0) {
  if (!(sigma > 0.0)) throw ContractError("builtin_mv_env: sigma must be positive");
  const double excess = mu - rfree;
  ScalarEnv env;
  env.drift = [excess](double, const ScalarEnv::State&, const ScalarEnv::Action& a) {
    return ScalarEnv::State::Constant(a(0) * excess);
  };
  env.diffusion = [sigma](double, const ScalarEnv::State&, const ScalarEnv::Action& a) {
    return ScalarEnv::Diffusion::Constant(a(0) * sigma);
  };
  env.reward_rate = [](double, const ScalarEnv::State&, const ScalarEnv::Action&) { return 0.0; };
  return env;
}

/// -(x - w)^2 + (w - z)^2, the reward-convention terminal payoff of the
/// Lagrangian mean-variance problem with multiplier w and target z.
inline std::function<double(const ScalarEnv::State&)> mv_terminal_payoff(double w, double z) {
  return [w, z](const ScalarEnv::State& x) { return -(x(0) - w) * (x(0) - w) + (w - z) * (w - z); };
}

/// Scalar ergodic linear-quadratic problem data.
struct LqParams {
  double A = -1.0, B = 0.0, C = 0.0, D = 1.0;
  double M = 2.0, N = 2.0, R = 1.0, P = 1.0, Q = 2.0;

  /// Configuration used throughout the ergodic experiments.
  static LqParams reference() { return {}; }

  double reward(double x, double a) const {
    return -(0.5 * M * x * x + R * x * a + 0.5 * N * a * a + P * x + Q * a);
  }
};

/// dX = (A X + B a) dt + (C X + D a) dW with the quadratic reward of LqParams.
inline ScalarEnv builtin_lq_env(const LqParams& p) {
  ScalarEnv env;
  env.drift = [p](double, const ScalarEnv::State& x, const ScalarEnv::Action& a) {
    return ScalarEnv::State::Constant(p.A * x(0) + p.B * a(0));
  };
  env.diffusion = [p](double, const ScalarEnv::State& x, const ScalarEnv::Action& a) {
    return ScalarEnv::Diffusion::Constant(p.C * x(0) + p.D * a(0));
  };
  env.reward_rate = [p](double, const ScalarEnv::State& x, const ScalarEnv::Action& a) {
    return p.reward(x(0), a(0));
  };
  return env;
}

/// Convenience constructors for the 1-D types.
inline ScalarEnv::State scalar_state(double x) { return ScalarEnv::State::Constant(x); }
inline ScalarEnv::Action scalar_action(double a) { return ScalarEnv::Action::Constant(a); }

}  // namespace contq
