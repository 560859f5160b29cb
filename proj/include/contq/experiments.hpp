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
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "contq/approx.hpp"
#include "contq/baselines.hpp"
#include "contq/envsim.hpp"
#include "contq/errors.hpp"
#include "contq/learners.hpp"
#include "contq/oracle.hpp"
#include "contq/rng.hpp"

namespace contq {

// ---------------------------------------------------------------------------
// Metrics

struct TerminalMetrics {
  double mean = 0.0;
  double variance = 0.0;
  /// (mean - x0) / std; +inf when the sample variance is zero.
  double sharpe = 0.0;
};

inline TerminalMetrics metrics_terminal(const std::vector<double>& wealths, double x0) {
  if (wealths.size() < 2) throw ContractError("metrics_terminal: need at least two runs");
  const double n = static_cast<double>(wealths.size());
  const double mean = std::accumulate(wealths.begin(), wealths.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : wealths) ss += (v - mean) * (v - mean);
  TerminalMetrics m;
  m.mean = mean;
  m.variance = ss / (n - 1.0);
  m.sharpe = m.variance > 0.0 ? (mean - x0) / std::sqrt(m.variance) : std::numeric_limits<double>::infinity();
  return m;
}

/// Cumulative sum_{i<=k} r_i dt / ((k+1) dt).
inline std::vector<double> running_average_reward(const std::vector<double>& rewards) {
  std::vector<double> out(rewards.size());
  double acc = 0.0;
  for (std::size_t k = 0; k < rewards.size(); ++k) {
    acc += rewards[k];
    out[k] = acc / static_cast<double>(k + 1);
  }
  return out;
}

/// w' = w - alpha_w (mean(X_T) - z). strict_box drops the "- z".
inline double lagrange_update(double w, const std::vector<double>& terminal_wealths, double alpha_w, double z,
                              bool strict_box = false) {
  if (terminal_wealths.empty()) throw ContractError("lagrange_update: no terminal wealths");
  const double mean = std::accumulate(terminal_wealths.begin(), terminal_wealths.end(), 0.0) /
                      static_cast<double>(terminal_wealths.size());
  return w - alpha_w * (strict_box ? mean : mean - z);
}

// ---------------------------------------------------------------------------
// Run records

enum class RunStatus { kOk, kDiverged };

struct RunRecord {
  std::string experiment;
  std::string algo;
  std::string mode;
  std::uint64_t seed = 0;
  int replication = 0;
  nlohmann::json config;
  RunStatus status = RunStatus::kOk;
  std::string failure;
  double failure_time = 0.0;

  std::vector<std::string> trace_columns;
  std::vector<std::vector<double>> trace;
  /// (time, running-average reward) samples, on-policy ergodic runs only.
  std::vector<std::pair<double, double>> running_average;
  std::map<std::string, double> metrics;
  std::vector<double> final_params;

  bool ok() const { return status == RunStatus::kOk; }
};

inline nlohmann::json metric_json(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  return v;
}

inline nlohmann::json to_summary_json(const RunRecord& r) {
  nlohmann::json j;
  j["replication"] = r.replication;
  j["status"] = r.ok() ? "ok" : "NA";
  if (!r.ok()) {
    j["failure"] = r.failure;
    j["failure_time"] = r.failure_time;
  } else {
    nlohmann::json m = nlohmann::json::object();
    for (const auto& [k, v] : r.metrics) m[k] = metric_json(v);
    j["metrics"] = m;
    j["final_params"] = r.final_params;
  }
  return j;
}

/// Aggregates replications sorted by index; diverged runs only count toward
/// n_diverged.
inline nlohmann::json summarize(std::vector<RunRecord> records) {
  std::sort(records.begin(), records.end(),
            [](const RunRecord& a, const RunRecord& b) { return a.replication < b.replication; });
  nlohmann::json out;
  if (!records.empty()) {
    out["experiment"] = records.front().experiment;
    out["algo"] = records.front().algo;
    out["mode"] = records.front().mode;
    out["seed"] = records.front().seed;
    out["config"] = records.front().config;
  }
  out["reps"] = records.size();
  std::map<std::string, std::vector<double>> pooled;
  int n_ok = 0;
  nlohmann::json per = nlohmann::json::array();
  for (const auto& r : records) {
    per.push_back(to_summary_json(r));
    if (!r.ok()) continue;
    ++n_ok;
    for (const auto& [k, v] : r.metrics) pooled[k].push_back(v);
  }
  out["replications"] = per;
  nlohmann::json agg;
  agg["n_ok"] = n_ok;
  agg["n_diverged"] = static_cast<int>(records.size()) - n_ok;
  nlohmann::json means = nlohmann::json::object();
  for (const auto& [k, vs] : pooled) {
    const double s = std::accumulate(vs.begin(), vs.end(), 0.0);
    means[k] = metric_json(s / static_cast<double>(vs.size()));
  }
  agg["mean"] = means;
  out["aggregate"] = agg;
  return out;
}

/// Runs fn(rep) for rep = 0..reps-1 on up to `threads` workers and returns the
/// results ordered by replication index.
template <class Fn>
std::vector<RunRecord> run_replications(int reps, Fn fn, unsigned threads = 1) {
  std::vector<RunRecord> out(static_cast<std::size_t>(std::max(reps, 0)));
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max(reps, 1))));
  if (threads == 1) {
    for (int r = 0; r < reps; ++r) out[r] = fn(r);
    return out;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  for (unsigned i = 0; i < threads; ++i) {
    pool.emplace_back([&] {
      for (int r = next++; r < reps; r = next++) out[r] = fn(r);
    });
  }
  for (auto& th : pool) th.join();
  return out;
}

// ---------------------------------------------------------------------------
// Ergodic LQ

enum class ErgodicAlgo { kQLearning, kSarsa, kPolicyGradient };

inline std::string to_string(ErgodicAlgo a) {
  switch (a) {
    case ErgodicAlgo::kQLearning: return "qlearn-online";
    case ErgodicAlgo::kSarsa: return "sarsa";
    case ErgodicAlgo::kPolicyGradient: return "pg";
  }
  return "?";
}

struct ErgodicConfig {
  LqParams params = LqParams::reference();
  double gamma = 0.1;
  double dt = 0.1;
  double horizon = 1e5;
  double x0 = 0.0;
  double alpha = 0.001;
  bool off_policy = false;
  double behavior_mean = 0.0;
  double behavior_variance = 1.0;
  SarsaGrad sarsa_grad = SarsaGrad::kRaw;
  /// Any learned parameter beyond this magnitude counts as divergence.
  double divergence_bound = 1e6;
  /// Number of trace rows (parameters and running average) per run.
  int trace_points = 200;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const {
    return {{"A", params.A}, {"B", params.B}, {"C", params.C}, {"D", params.D}, {"M", params.M},
            {"N", params.N}, {"R", params.R}, {"P", params.P}, {"Q", params.Q}, {"gamma", gamma},
            {"dt", dt}, {"horizon", horizon}, {"x0", x0}, {"alpha", alpha}, {"off_policy", off_policy},
            {"behavior_mean", behavior_mean}, {"behavior_variance", behavior_variance},
            {"sarsa_grad", sarsa_grad == SarsaGrad::kRaw ? "raw" : "advantage"},
            {"divergence_bound", divergence_bound}, {"schedule", "1/max(1,sqrt(log t))"}, {"seed", seed}};
  }
};

/// Long-run average reward of the initial policy N(0, 1) on the given problem.
inline double ergodic_initial_reward(const ErgodicConfig& cfg) {
  return lq_evaluate_policy(cfg.params, cfg.gamma, {0.0, 0.0, 1.0}).mean_reward;
}

namespace detail {

/// Policy summary (slope, intercept, variance) shared by every algorithm.
struct PolicyTriple {
  double slope, intercept, variance;
};

}  // namespace detail

/// One long trajectory of online learning on the ergodic LQ problem.
///
/// Streams: {rep, 0} drives the Brownian increments and the behavior actions;
/// {rep, 1} drives on-policy actions and SARSA's next-action draws.
inline RunRecord run_ergodic(const ErgodicConfig& cfg, ErgodicAlgo algo, int replication) {
  RunRecord rec;
  rec.experiment = cfg.off_policy ? "lq-off" : "lq";
  rec.algo = to_string(algo);
  rec.mode = cfg.off_policy ? "off-policy" : "on-policy";
  rec.seed = cfg.seed;
  rec.replication = replication;
  rec.config = cfg.to_json();

  const auto env = builtin_lq_env(cfg.params);
  const EpisodeConfig grid{cfg.horizon, cfg.dt, 1, cfg.seed, 1};
  const std::int64_t steps = grid.grid_count();
  const std::int64_t trace_every = std::max<std::int64_t>(1, steps / std::max(1, cfg.trace_points));

  RngStream data(cfg.seed, {static_cast<std::uint64_t>(replication), 0});
  RngStream pol(cfg.seed, {static_cast<std::uint64_t>(replication), 1});
  const double sqrt_dt = std::sqrt(cfg.dt);
  const double behavior_sd = std::sqrt(cfg.behavior_variance);

  LearnerConfig lc;
  lc.gamma = cfg.gamma;
  lc.alpha_theta = lc.alpha_psi = lc.alpha_V = lc.alpha_phi = cfg.alpha;
  lc.schedule = log_time_schedule;
  lc.divergence_bound = cfg.divergence_bound;

  QuadraticValue J;
  QuadraticQ q = lq_q(ParamVec<3>(0.0, 0.0, std::log(1.0 / cfg.gamma)), cfg.gamma);
  QuadraticQdt Q = qdt_lq_preset((ParamVec<5>() << 0.0, 0.0, -std::log(cfg.gamma * cfg.dt), 0.0, 0.0).finished(),
                                 cfg.gamma, cfg.dt);
  LinearGaussianFamily pg;
  double V = 0.0;

  auto triple = [&]() -> detail::PolicyTriple {
    switch (algo) {
      case ErgodicAlgo::kQLearning: return {q.psi(0), q.psi(1), cfg.gamma * std::exp(q.psi(2))};
      case ErgodicAlgo::kSarsa: return {Q.psi(0), Q.psi(1), cfg.gamma * cfg.dt * std::exp(Q.psi(2))};
      case ErgodicAlgo::kPolicyGradient: return {pg.phi(0), pg.phi(1), std::exp(pg.phi(2))};
    }
    return {0, 0, 0};
  };
  auto raw_params = [&]() -> std::vector<double> {
    switch (algo) {
      case ErgodicAlgo::kQLearning: return {J.theta(0), J.theta(1), q.psi(0), q.psi(1), q.psi(2), V};
      case ErgodicAlgo::kSarsa: return {Q.psi(0), Q.psi(1), Q.psi(2), Q.psi(3), Q.psi(4), V};
      case ErgodicAlgo::kPolicyGradient: return {J.theta(0), J.theta(1), pg.phi(0), pg.phi(1), pg.phi(2), V};
    }
    return {};
  };
  switch (algo) {
    case ErgodicAlgo::kQLearning: rec.trace_columns = {"t", "theta1", "theta2", "psi1", "psi2", "psi3", "V"}; break;
    case ErgodicAlgo::kSarsa: rec.trace_columns = {"t", "psi1", "psi2", "psi3", "psi4", "psi5", "V"}; break;
    case ErgodicAlgo::kPolicyGradient:
      rec.trace_columns = {"t", "theta1", "theta2", "phi1", "phi2", "phi3", "V"};
      break;
  }
  for (const char* c : {"policy_slope", "policy_intercept", "policy_variance", "avg_reward"})
    rec.trace_columns.push_back(c);

  auto draw_policy = [&](double t, const ScalarEnv::State& x) -> ScalarEnv::Action {
    switch (algo) {
      case ErgodicAlgo::kQLearning: return policy_sample(q, t, x, pol);
      case ErgodicAlgo::kSarsa: return policy_sample(Q, t, x, pol);
      case ErgodicAlgo::kPolicyGradient: return policy_sample(pg, t, x, pol);
    }
    return scalar_action(0.0);
  };

  ScalarEnv::State x = scalar_state(cfg.x0);
  ScalarEnv::Action a_next = scalar_action(0.0);
  bool have_next = false;
  double reward_sum = 0.0;
  double t = 0.0;

  auto push_trace = [&](double time) {
    auto row = raw_params();
    row.insert(row.begin(), time);
    const auto tp = triple();
    row.push_back(tp.slope);
    row.push_back(tp.intercept);
    row.push_back(tp.variance);
    row.push_back(time > 0.0 ? reward_sum / time : 0.0);
    rec.trace.push_back(std::move(row));
    if (!cfg.off_policy && time > 0.0) rec.running_average.emplace_back(time, reward_sum / time);
  };

  try {
    push_trace(0.0);
    for (std::int64_t k = 0; k < steps; ++k) {
      t = static_cast<double>(k) * cfg.dt;
      ScalarEnv::Action a;
      if (cfg.off_policy) {
        a = scalar_action(cfg.behavior_mean + behavior_sd * data.normal());
      } else if (algo == ErgodicAlgo::kSarsa && have_next) {
        a = a_next;
      } else {
        a = draw_policy(t, x);
      }
      const ScalarEnv::Noise dW = ScalarEnv::Noise::Constant(sqrt_dt * data.normal());
      const auto st = step_euler(env, t, x, a, cfg.dt, dW);
      const Transition<ScalarEnv> tr{t, cfg.dt, x, a, st.reward_rate, st.x_next};
      reward_sum += st.reward_rate * cfg.dt;

      switch (algo) {
        case ErgodicAlgo::kQLearning: {
          const auto u = ergodic_update(tr, J, q, V, lc, t);
          J.theta = u.theta;
          q.psi = u.psi;
          V = u.V;
          break;
        }
        case ErgodicAlgo::kSarsa: {
          a_next = policy_sample(Q, t + cfg.dt, st.x_next, pol);
          have_next = true;
          const auto u = sarsa_ergodic_update(tr, a_next, Q, V, lc, t, cfg.sarsa_grad);
          Q.psi = u.psi;
          V = u.V;
          break;
        }
        case ErgodicAlgo::kPolicyGradient: {
          const auto phi = pg_update(tr, J, pg, lc, 0.0, t, V);
          const auto critic = pg_critic_update(tr, J, pg, V, lc, 0.0, t, true);
          pg.phi = phi;
          J.theta = critic.theta;
          V = critic.V;
          break;
        }
      }
      x = st.x_next;
      if ((k + 1) % trace_every == 0 || k + 1 == steps) push_trace(static_cast<double>(k + 1) * cfg.dt);
    }
  } catch (const SimulationDiverged& e) {
    rec.status = RunStatus::kDiverged;
    rec.failure = "state diverged";
    rec.failure_time = e.time();
  } catch (const ParameterDiverged&) {
    rec.status = RunStatus::kDiverged;
    rec.failure = "parameters diverged";
    rec.failure_time = t;
  } catch (const DomainError&) {
    rec.status = RunStatus::kDiverged;
    rec.failure = "policy left its domain";
    rec.failure_time = t;
  }

  if (rec.ok()) {
    const auto tp = triple();
    rec.final_params = raw_params();
    rec.metrics["policy_slope"] = tp.slope;
    rec.metrics["policy_intercept"] = tp.intercept;
    rec.metrics["policy_variance"] = tp.variance;
    rec.metrics["V"] = V;
    if (!cfg.off_policy) rec.metrics["final_avg_reward"] = reward_sum / cfg.horizon;
  }
  return rec;
}

// ---------------------------------------------------------------------------
// Mean-variance portfolio

enum class MvAlgo { kQLearnMl, kQLearnTd, kSarsa, kPolicyGradient };

inline std::string to_string(MvAlgo a) {
  switch (a) {
    case MvAlgo::kQLearnMl: return "qlearn-ml";
    case MvAlgo::kQLearnTd: return "qlearn-td";
    case MvAlgo::kSarsa: return "sarsa";
    case MvAlgo::kPolicyGradient: return "pg";
  }
  return "?";
}

struct MvExperimentConfig {
  double mu = -0.5;
  double sigma = 0.1;
  double rfree = 0.0;
  double horizon = 1.0;
  double x0 = 1.0;
  double z = 1.4;
  double gamma = 0.1;
  int m = 10;
  double alpha_w = 0.005;
  double alpha_theta = 0.001;
  double alpha_psi = 0.001;
  double alpha_phi = 0.001;
  double schedule_power = 0.51;
  int episodes = 20000;
  int batch = 32;
  double dt = 1.0 / 25.0;
  int eval_runs = 100;
  /// Length of the pre-generated market history, in years.
  double pool_years = 20.0;
  bool strict_box_w = false;
  MlInnerSum ml_inner_sum = MlInnerSum::kDisplay;
  SarsaGrad sarsa_grad = SarsaGrad::kRaw;
  double divergence_bound = 1e8;
  int trace_every = 100;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const {
    return {{"mu", mu}, {"sigma", sigma}, {"rfree", rfree}, {"T", horizon}, {"x0", x0}, {"z", z},
            {"gamma", gamma}, {"m", m}, {"alpha_w", alpha_w}, {"alpha_theta", alpha_theta},
            {"alpha_psi", alpha_psi}, {"alpha_phi", alpha_phi}, {"schedule", "j^-" + std::to_string(schedule_power)},
            {"episodes", episodes}, {"batch", batch}, {"dt", dt}, {"eval_runs", eval_runs},
            {"eval_protocol", "one fresh episode per evaluation run, stochastic actions"},
            {"pool_years", pool_years}, {"strict_box_w", strict_box_w},
            {"ml_inner_sum", ml_inner_sum == MlInnerSum::kDisplay ? "display" : "box"},
            {"sarsa_grad", sarsa_grad == SarsaGrad::kRaw ? "raw" : "advantage"},
            {"divergence_bound", divergence_bound}, {"seed", seed}};
  }
};

namespace detail {

/// Simulates one wealth episode from a slice of Brownian increments.
template <class Policy>
Trajectory<ScalarEnv> mv_episode(const ScalarEnv& env, const Policy& policy, const double* dW, int K, double dt,
                                 double x0, RngStream& rng) {
  Trajectory<ScalarEnv> traj;
  traj.times.resize(K + 1);
  traj.states.resize(K + 1);
  traj.actions.resize(K);
  traj.rewards.resize(K);
  traj.times[0] = 0.0;
  traj.states[0] = scalar_state(x0);
  for (int k = 0; k < K; ++k) {
    const double t = static_cast<double>(k) * dt;
    traj.actions[k] = policy_sample(policy, t, traj.states[k], rng);
    const auto st = step_euler(env, t, traj.states[k], traj.actions[k], dt, ScalarEnv::Noise::Constant(dW[k]));
    traj.rewards[k] = st.reward_rate;
    traj.times[k + 1] = static_cast<double>(k + 1) * dt;
    traj.states[k + 1] = st.x_next;
  }
  traj.terminal_payoff = env.terminal_reward(traj.states[K]);
  return traj;
}

}  // namespace detail

/// Offline-episodic training on a fixed market history followed by
/// out-of-sample evaluation on fresh paths.
///
/// Streams: {rep, 0} generates the history, {rep, 1} segment choices and
/// training actions, {rep, 2} evaluation paths and actions.
inline RunRecord run_mv(const MvExperimentConfig& cfg, MvAlgo algo, int replication) {
  RunRecord rec;
  rec.experiment = "mv";
  rec.algo = to_string(algo);
  rec.mode = "on-policy";
  rec.seed = cfg.seed;
  rec.replication = replication;
  rec.config = cfg.to_json();

  const EpisodeConfig grid{cfg.horizon, cfg.dt, cfg.episodes, cfg.seed, cfg.batch};
  const int K = grid.grid_count();
  if (cfg.m < 1 || cfg.batch < 1 || cfg.episodes < 0) throw ContractError("run_mv: invalid m, batch or episodes");
  auto env = builtin_mv_env(cfg.mu, cfg.sigma, cfg.rfree);

  const auto rep = static_cast<std::uint64_t>(replication);
  RngStream data(cfg.seed, {rep, 0});
  RngStream train(cfg.seed, {rep, 1});
  RngStream eval(cfg.seed, {rep, 2});

  const int pool_size = std::max(K, static_cast<int>(std::llround(cfg.pool_years / cfg.horizon)) * K);
  std::vector<double> pool(pool_size);
  const double sqrt_dt = std::sqrt(cfg.dt);
  for (double& v : pool) v = sqrt_dt * data.normal();

  LearnerConfig lc;
  lc.gamma = cfg.gamma;
  lc.alpha_theta = cfg.alpha_theta;
  lc.alpha_psi = cfg.alpha_psi;
  lc.alpha_phi = cfg.alpha_phi;
  lc.alpha_w = cfg.alpha_w;
  lc.schedule = [p = cfg.schedule_power](double j) { return episode_power_schedule(j, p); };
  lc.ml_inner_sum = cfg.ml_inner_sum;
  lc.divergence_bound = cfg.divergence_bound;

  double w = cfg.z;
  NegatedValue<MeanVarianceValue> J(mv_value(ParamVec<3>::Zero(), w, cfg.z, cfg.horizon));
  MeanVarianceQ q = mv_q(ParamVec<3>::Zero(), w, cfg.gamma, cfg.horizon);
  // Initial SARSA policy matches the others: N(0, gamma).
  MeanVarianceQdt Q = qdt_mv_preset((ParamVec<5>() << -std::log(cfg.dt), 0.0, 0.0, 0.0, 0.0).finished(), w, cfg.z,
                                    cfg.horizon, cfg.gamma, cfg.dt);
  MeanVarianceFamily pg{ParamVec<3>::Zero(), w, cfg.gamma, cfg.horizon};

  auto set_w = [&](double nw) {
    w = nw;
    J.w = nw;
    q.w = nw;
    Q.w = nw;
    pg.w = nw;
    env.terminal_reward = mv_terminal_payoff(nw, cfg.z);
  };
  set_w(w);

  auto raw_params = [&]() -> std::vector<double> {
    std::vector<double> out;
    switch (algo) {
      case MvAlgo::kQLearnMl:
      case MvAlgo::kQLearnTd: out = {J.theta(0), J.theta(1), J.theta(2), q.psi(0), q.psi(1), q.psi(2)}; break;
      case MvAlgo::kSarsa: out = {Q.psi(0), Q.psi(1), Q.psi(2), Q.psi(3), Q.psi(4)}; break;
      case MvAlgo::kPolicyGradient:
        out = {J.theta(0), J.theta(1), J.theta(2), pg.phi(0), pg.phi(1), pg.phi(2)};
        break;
    }
    out.push_back(w);
    return out;
  };
  switch (algo) {
    case MvAlgo::kQLearnMl:
    case MvAlgo::kQLearnTd:
      rec.trace_columns = {"j", "theta1", "theta2", "theta3", "psi1", "psi2", "psi3", "w", "batch_mean_wealth"};
      break;
    case MvAlgo::kSarsa: rec.trace_columns = {"j", "psi1", "psi2", "psi3", "psi4", "psi5", "w", "batch_mean_wealth"}; break;
    case MvAlgo::kPolicyGradient:
      rec.trace_columns = {"j", "theta1", "theta2", "theta3", "phi1", "phi2", "phi3", "w", "batch_mean_wealth"};
      break;
  }

  auto episode = [&](const double* dW, RngStream& rng) {
    switch (algo) {
      case MvAlgo::kQLearnMl:
      case MvAlgo::kQLearnTd: return detail::mv_episode(env, q, dW, K, cfg.dt, cfg.x0, rng);
      case MvAlgo::kSarsa: return detail::mv_episode(env, Q, dW, K, cfg.dt, cfg.x0, rng);
      case MvAlgo::kPolicyGradient: return detail::mv_episode(env, pg, dW, K, cfg.dt, cfg.x0, rng);
    }
    return Trajectory<ScalarEnv>{};
  };

  std::vector<Trajectory<ScalarEnv>> batch(cfg.batch);
  std::vector<double> recent_wealth;
  recent_wealth.reserve(static_cast<std::size_t>(cfg.m) * cfg.batch);
  int j = 0;
  try {
    for (j = 1; j <= cfg.episodes; ++j) {
      double batch_wealth = 0.0;
      for (auto& traj : batch) {
        const auto start = train.below(static_cast<std::uint64_t>(pool_size - K + 1));
        traj = episode(pool.data() + start, train);
        recent_wealth.push_back(traj.states.back()(0));
        batch_wealth += traj.states.back()(0);
      }
      const std::span<const Trajectory<ScalarEnv>> view(batch);
      const double l = lc.rate(j) / static_cast<double>(cfg.batch);
      switch (algo) {
        case MvAlgo::kQLearnMl: {
          const auto u = ml_update(view, J, q, lc, 0.0, j);
          J.theta = u.theta;
          q.psi = u.psi;
          break;
        }
        case MvAlgo::kQLearnTd: {
          const auto u = offline_td_update(view, J, q, lc, 0.0, j);
          J.theta = u.theta;
          q.psi = u.psi;
          break;
        }
        case MvAlgo::kSarsa: {
          ParamVec<5> d = ParamVec<5>::Zero();
          for (const auto& traj : batch) {
            for (int k = 0; k < K; ++k) {
              const auto tr = traj.transition(k);
              const bool last = k == K - 1;
              const double b = sarsa_bracket(tr, last ? tr.a : traj.actions[k + 1], Q, 0.0,
                                             last ? traj.terminal_payoff : std::nullopt);
              d += b * sarsa_direction(tr, Q, cfg.sarsa_grad);
            }
          }
          Q.psi = checked_psi<MeanVarianceQdt>(Q.psi + (l * cfg.alpha_psi) * d, Q.psi, 0.0, cfg.divergence_bound);
          break;
        }
        case MvAlgo::kPolicyGradient: {
          ParamVec<3> dphi = ParamVec<3>::Zero();
          ParamVec<3> dtheta = ParamVec<3>::Zero();
          for (const auto& traj : batch) {
            for (int k = 0; k < K; ++k) {
              const auto tr = traj.transition(k);
              const bool last = k == K - 1;
              const double b =
                  pg_bracket(tr, J, pg, cfg.gamma, 0.0, 0.0, last ? traj.terminal_payoff : std::nullopt);
              dphi += b * pg.score(tr.t, tr.x, tr.a);
              dtheta += b * J.grad_theta(tr.t, tr.x);
            }
          }
          const ParamVec<3> phi = pg.phi + (l * cfg.alpha_phi) * dphi;
          const ParamVec<3> theta = J.theta + (l * cfg.alpha_theta) * dtheta;
          if (!detail::all_finite_within(cfg.divergence_bound, phi, theta))
            throw ParameterDiverged(detail::concat(pg.phi, J.theta));
          pg.phi = phi;
          J.theta = theta;
          break;
        }
      }
      if (j % cfg.m == 0) {
        set_w(lagrange_update(w, recent_wealth, cfg.alpha_w, cfg.z, cfg.strict_box_w));
        recent_wealth.clear();
        if (!std::isfinite(w) || std::abs(w) > cfg.divergence_bound) throw ParameterDiverged({w});
      }
      if (j % std::max(1, cfg.trace_every) == 0 || j == cfg.episodes) {
        auto row = raw_params();
        row.insert(row.begin(), static_cast<double>(j));
        row.push_back(batch_wealth / static_cast<double>(cfg.batch));
        rec.trace.push_back(std::move(row));
      }
    }

    std::vector<double> wealth(cfg.eval_runs);
    std::vector<double> fresh(K);
    for (auto& v : wealth) {
      for (double& d : fresh) d = sqrt_dt * eval.normal();
      v = episode(fresh.data(), eval).states.back()(0);
    }
    const auto m = metrics_terminal(wealth, cfg.x0);
    rec.metrics["mean"] = m.mean;
    rec.metrics["variance"] = m.variance;
    rec.metrics["sharpe"] = m.sharpe;
    rec.metrics["w"] = w;
    rec.final_params = raw_params();
  } catch (const SimulationDiverged& e) {
    rec.status = RunStatus::kDiverged;
    rec.failure = "wealth diverged";
    rec.failure_time = j;
  } catch (const ParameterDiverged&) {
    rec.status = RunStatus::kDiverged;
    rec.failure = "parameters diverged";
    rec.failure_time = j;
  } catch (const DomainError&) {
    rec.status = RunStatus::kDiverged;
    rec.failure = "policy left its domain";
    rec.failure_time = j;
  }
  return rec;
}

}  // namespace contq
