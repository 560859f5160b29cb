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

// Command-line driver: contq {mv,lq,lq-off,oracle,check} [options].

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "contq/contq.hpp"

namespace fs = std::filesystem;
using namespace contq;

namespace {

struct Common {
  std::string algo;
  double dt = 0.0;
  double gamma = 0.1;
  std::uint64_t seed = 0;
  int reps = 100;
  std::string out = "out";
  unsigned threads = std::max(1u, std::thread::hardware_concurrency());
  bool no_trajectory = false;
  std::string config;
};

void add_common(CLI::App* sub, Common& c, const std::vector<std::string>& algos, double default_dt) {
  c.algo = algos.front();
  c.dt = default_dt;
  sub->add_option("--config", c.config, "key=value file; command-line flags take precedence");
  sub->add_option("--algo", c.algo, "learning algorithm")->check(CLI::IsMember(algos))->capture_default_str();
  sub->add_option("--dt", c.dt, "time step")->check(CLI::PositiveNumber)->capture_default_str();
  sub->add_option("--gamma", c.gamma, "entropy temperature")->check(CLI::PositiveNumber)->capture_default_str();
  sub->add_option("--seed", c.seed, "master seed")->capture_default_str();
  sub->add_option("--reps", c.reps, "replications")->check(CLI::PositiveNumber)->capture_default_str();
  sub->add_option("--out", c.out, "output directory")->capture_default_str();
  sub->add_option("--threads", c.threads, "worker threads (results do not depend on it)")->capture_default_str();
  sub->add_flag("--no-trajectory", c.no_trajectory, "skip the sample trajectory files");
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  auto os = detail::open_out(path);
  os << j.dump(2) << '\n';
}

/// Per-replication trace and reward files, the snapshot list and summary.json.
void write_outputs(const Common& c, const std::vector<RunRecord>& runs, const std::vector<ParameterSnapshot>& snaps,
                   const std::function<std::vector<std::vector<double>>(const RunRecord&)>& rewards,
                   const std::vector<std::string>& reward_columns, const nlohmann::json& extra) {
  const fs::path dir(c.out);
  for (const auto& r : runs) {
    const auto tag = std::to_string(r.replication);
    write_trace_csv(dir / ("trace_" + tag + ".csv"), r.trace_columns, r.trace);
    write_trace_csv(dir / ("rewards_" + tag + ".csv"), reward_columns, rewards(r));
  }
  write_json(dir / "params.json", nlohmann::json(snaps));
  auto summary = summarize(runs);
  for (const auto& [k, v] : extra.items()) summary[k] = v;
  write_json(dir / "summary.json", summary);
  std::cout << "wrote " << runs.size() << " replications to " << dir.string() << " (n_diverged "
            << summary["aggregate"]["n_diverged"] << ")\n";
  for (const auto& [k, v] : summary["aggregate"]["mean"].items()) std::cout << "  mean " << k << " = " << v << '\n';
}

// ---------------------------------------------------------------------------
// Ergodic LQ

struct LqOptions {
  double horizon = 1e5;
  double alpha = 0.001;
  double behavior_mean = 0.0;
  double behavior_variance = 1.0;
  std::string sarsa_grad = "raw";
  int trace_points = 200;
};

ErgodicAlgo parse_ergodic(const std::string& s) {
  if (s == "sarsa") return ErgodicAlgo::kSarsa;
  if (s == "pg") return ErgodicAlgo::kPolicyGradient;
  return ErgodicAlgo::kQLearning;
}

ParameterSnapshot lq_snapshot(const RunRecord& r, double gamma) {
  ParameterSnapshot s;
  s.name = r.experiment + "/" + r.algo + "/rep" + std::to_string(r.replication);
  s.gamma = gamma;
  if (!r.ok()) return s;
  const auto& p = r.final_params;
  if (r.algo == "sarsa") {
    s.psi.assign(p.begin(), p.begin() + 5);
  } else {
    s.theta.assign(p.begin(), p.begin() + 2);
    s.psi.assign(p.begin() + 2, p.begin() + 5);
  }
  s.V = p.back();
  return s;
}

int run_lq(const Common& c, const LqOptions& o, bool off_policy) {
  ErgodicConfig cfg;
  cfg.gamma = c.gamma;
  cfg.dt = c.dt;
  cfg.horizon = o.horizon;
  cfg.alpha = o.alpha;
  cfg.off_policy = off_policy;
  cfg.behavior_mean = o.behavior_mean;
  cfg.behavior_variance = o.behavior_variance;
  cfg.sarsa_grad = o.sarsa_grad == "advantage" ? SarsaGrad::kAdvantage : SarsaGrad::kRaw;
  cfg.trace_points = o.trace_points;
  cfg.seed = c.seed;
  const auto algo = parse_ergodic(c.algo);
  const auto runs = run_replications(c.reps, [&](int r) { return run_ergodic(cfg, algo, r); }, c.threads);

  std::vector<ParameterSnapshot> snaps;
  for (const auto& r : runs) snaps.push_back(lq_snapshot(r, c.gamma));
  const auto sol = lq_ergodic_fixed_point(cfg.params, cfg.gamma);
  nlohmann::json extra{{"oracle", sol.snapshot()}, {"initial_avg_reward", ergodic_initial_reward(cfg)}};
  extra["oracle"]["mean_reward"] = sol.mean_reward();
  write_outputs(
      c, runs, snaps,
      [](const RunRecord& r) {
        std::vector<std::vector<double>> rows;
        for (const auto& [t, v] : r.running_average) rows.push_back({t, v});
        return rows;
      },
      {"t", "running_avg_reward"}, extra);

  if (!c.no_trajectory && runs.front().ok()) {
    const auto& m = runs.front().metrics;
    const LinearGaussianPolicy pi{m.at("policy_slope"), m.at("policy_intercept"), m.at("policy_variance")};
    const EpisodeConfig grid{std::min(o.horizon, 100.0), c.dt, 1, c.seed, 1};
    const auto env = builtin_lq_env(cfg.params);
    const auto traj = simulate_episode(env, sampler(pi), grid, scalar_state(cfg.x0), RngStream(c.seed, {0, 99}));
    save_trajectory(fs::path(c.out) / "trajectory_0", traj, cfg.to_json(), c.seed);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// Mean-variance

struct MvOptions {
  int episodes = 20000;
  double mu = -0.5;
  double sigma = 0.1;
  double z = 1.4;
  double horizon = 1.0;
  int batch = 32;
  int m = 10;
  int eval_runs = 100;
  double alpha_theta = 0.001;
  double alpha_psi = 0.001;
  double alpha_phi = 0.001;
  double alpha_w = 0.005;
  double pool_years = 20.0;
  bool strict_box_w = false;
  std::string ml_inner_sum = "display";
  std::string sarsa_grad = "raw";
  int trace_every = 100;
};

MvAlgo parse_mv(const std::string& s) {
  if (s == "qlearn-ml") return MvAlgo::kQLearnMl;
  if (s == "sarsa") return MvAlgo::kSarsa;
  if (s == "pg") return MvAlgo::kPolicyGradient;
  return MvAlgo::kQLearnTd;
}

ParameterSnapshot mv_snapshot(const RunRecord& r, double gamma) {
  ParameterSnapshot s;
  s.name = r.experiment + "/" + r.algo + "/rep" + std::to_string(r.replication);
  s.gamma = gamma;
  if (!r.ok()) return s;
  const auto& p = r.final_params;
  if (r.algo == "sarsa") {
    s.psi.assign(p.begin(), p.begin() + 5);
  } else {
    s.theta.assign(p.begin(), p.begin() + 3);
    s.psi.assign(p.begin() + 3, p.begin() + 6);
  }
  s.w = p.back();
  return s;
}

int run_mv_cmd(const Common& c, const MvOptions& o) {
  MvExperimentConfig cfg;
  cfg.mu = o.mu;
  cfg.sigma = o.sigma;
  cfg.z = o.z;
  cfg.horizon = o.horizon;
  cfg.gamma = c.gamma;
  cfg.dt = c.dt;
  cfg.episodes = o.episodes;
  cfg.batch = o.batch;
  cfg.m = o.m;
  cfg.eval_runs = o.eval_runs;
  cfg.alpha_theta = o.alpha_theta;
  cfg.alpha_psi = o.alpha_psi;
  cfg.alpha_phi = o.alpha_phi;
  cfg.alpha_w = o.alpha_w;
  cfg.pool_years = o.pool_years;
  cfg.strict_box_w = o.strict_box_w;
  cfg.ml_inner_sum = o.ml_inner_sum == "box" ? MlInnerSum::kBox : MlInnerSum::kDisplay;
  cfg.sarsa_grad = o.sarsa_grad == "advantage" ? SarsaGrad::kAdvantage : SarsaGrad::kRaw;
  cfg.trace_every = o.trace_every;
  cfg.seed = c.seed;
  (void)EpisodeConfig{cfg.horizon, cfg.dt}.grid_count();
  const auto algo = parse_mv(c.algo);
  const auto runs = run_replications(c.reps, [&](int r) { return run_mv(cfg, algo, r); }, c.threads);

  std::vector<ParameterSnapshot> snaps;
  for (const auto& r : runs) snaps.push_back(mv_snapshot(r, c.gamma));
  write_outputs(
      c, runs, snaps,
      [](const RunRecord& r) {
        std::vector<std::vector<double>> rows;
        for (const auto& row : r.trace) rows.push_back({row.front(), row.back()});
        return rows;
      },
      {"episode", "batch_mean_terminal_wealth"}, nlohmann::json::object());

  if (!c.no_trajectory && runs.front().ok()) {
    const auto& r = runs.front();
    const double w = r.metrics.at("w");
    auto env = builtin_mv_env(cfg.mu, cfg.sigma, cfg.rfree);
    env.terminal_reward = mv_terminal_payoff(w, cfg.z);
    const EpisodeConfig grid{cfg.horizon, cfg.dt, 1, c.seed, 1};
    const RngStream rng(c.seed, {0, 99});
    const auto& p = r.final_params;
    Trajectory<ScalarEnv> traj;
    if (algo == MvAlgo::kSarsa) {
      ParamVec<5> psi;
      for (int i = 0; i < 5; ++i) psi(i) = p[i];
      const auto Q = qdt_mv_preset(psi, w, cfg.z, cfg.horizon, cfg.gamma, cfg.dt);
      traj = simulate_episode(env, sampler(Q), grid, scalar_state(cfg.x0), rng);
    } else if (algo == MvAlgo::kPolicyGradient) {
      const MeanVarianceFamily pi{ParamVec<3>(p[3], p[4], p[5]), w, cfg.gamma, cfg.horizon};
      traj = simulate_episode(env, sampler(pi), grid, scalar_state(cfg.x0), rng);
    } else {
      const auto q = mv_q(ParamVec<3>(p[3], p[4], p[5]), w, cfg.gamma, cfg.horizon);
      traj = simulate_episode(env, sampler(q), grid, scalar_state(cfg.x0), rng);
    }
    save_trajectory(fs::path(c.out) / "trajectory_0", traj, cfg.to_json(), c.seed);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// Oracle and property checks

int run_oracle(double gamma, const std::string& out) {
  const auto sol = lq_ergodic_fixed_point(LqParams::reference(), gamma);
  nlohmann::json j = sol.snapshot();
  j["psi_star"] = {sol.policy.slope, sol.policy.intercept, sol.psi()(2)};
  j["policy"] = {{"slope", sol.policy.slope}, {"intercept", sol.policy.intercept}, {"variance", sol.policy.var}};
  j["mean_reward"] = sol.mean_reward();
  j["k2"] = sol.k2;
  j["k1"] = sol.k1;
  std::cout << j.dump(2) << '\n';
  if (!out.empty()) write_json(fs::path(out) / "oracle.json", j);
  return 0;
}

int run_check(std::uint64_t seed, double scale) {
  SuiteOptions opt;
  opt.seed = seed;
  opt.mc_scale = scale;
  bool ok = true;
  for (const auto& r : run_property_suite(opt)) {
    std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.value << " (tol " << r.tolerance << ") "
              << r.detail << '\n';
    ok = ok && r.passed;
  }
  return ok ? 0 : 1;
}

/// Expands "--config FILE" into leading --key=value arguments so that flags
/// given explicitly on the command line override the file.
std::vector<std::string> expand_config(int argc, char** argv) {
  std::vector<std::string> in(argv + 1, argv + argc), out;
  std::string file;
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (in[i] == "--config" && i + 1 < in.size()) {
      file = in[++i];
    } else if (in[i].rfind("--config=", 0) == 0) {
      file = in[i].substr(9);
    } else {
      out.push_back(in[i]);
    }
  }
  if (file.empty() || out.empty()) return out;
  std::vector<std::string> injected;
  for (const auto& item : CLI::ConfigINI().from_file(file)) {
    std::string value;
    for (const auto& v : item.inputs) value += (value.empty() ? "" : ",") + v;
    injected.push_back("--" + item.name + "=" + value);
  }
  out.insert(out.begin() + 1, injected.begin(), injected.end());
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Continuous-time q-learning experiments"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  Common mv_c, lq_c, off_c;
  MvOptions mv_o;
  LqOptions lq_o, off_o;

  auto* mv = app.add_subcommand("mv", "mean-variance portfolio experiment");
  add_common(mv, mv_c, {"qlearn-td", "qlearn-ml", "sarsa", "pg"}, 1.0 / 25.0);
  mv->get_option("--reps")->description("replications (overrides the profile)")->default_str("");
  std::string mv_profile = "desk";
  mv->add_option("--profile", mv_profile, "desk: 20 reps x 5000 episodes; full: 100 reps x 20000 episodes")
      ->check(CLI::IsMember({"desk", "full"}))
      ->capture_default_str();
  auto* mv_episodes = mv->add_option("--episodes", mv_o.episodes, "training episodes (overrides the profile)")
                          ->check(CLI::PositiveNumber);
  mv->add_option("--mu", mv_o.mu, "asset drift")->capture_default_str();
  mv->add_option("--sigma", mv_o.sigma, "asset volatility")->check(CLI::PositiveNumber)->capture_default_str();
  mv->add_option("--z", mv_o.z, "target terminal wealth")->capture_default_str();
  mv->add_option("--horizon", mv_o.horizon, "investment horizon T")->capture_default_str();
  mv->add_option("--batch", mv_o.batch, "episodes per update")->check(CLI::PositiveNumber)->capture_default_str();
  mv->add_option("--m", mv_o.m, "updates between multiplier steps")->check(CLI::PositiveNumber)->capture_default_str();
  mv->add_option("--eval-runs", mv_o.eval_runs, "evaluation episodes")->capture_default_str();
  mv->add_option("--alpha-theta", mv_o.alpha_theta)->capture_default_str();
  mv->add_option("--alpha-psi", mv_o.alpha_psi)->capture_default_str();
  mv->add_option("--alpha-phi", mv_o.alpha_phi)->capture_default_str();
  mv->add_option("--alpha-w", mv_o.alpha_w)->capture_default_str();
  mv->add_option("--pool-years", mv_o.pool_years, "length of the training market history")->capture_default_str();
  mv->add_flag("--strict-box-w", mv_o.strict_box_w, "multiplier step without the target shift");
  mv->add_option("--ml-inner-sum", mv_o.ml_inner_sum)->check(CLI::IsMember({"display", "box"}))->capture_default_str();
  mv->add_option("--sarsa-grad", mv_o.sarsa_grad)->check(CLI::IsMember({"raw", "advantage"}))->capture_default_str();
  mv->add_option("--trace-every", mv_o.trace_every)->capture_default_str();

  auto add_lq = [](CLI::App* sub, LqOptions& o) {
    sub->add_option("--horizon", o.horizon, "total time")->check(CLI::PositiveNumber)->capture_default_str();
    sub->add_option("--episodes", o.horizon, "alias of --horizon for the single ergodic episode");
    sub->add_option("--alpha", o.alpha, "learning rate")->capture_default_str();
    sub->add_option("--sarsa-grad", o.sarsa_grad)->check(CLI::IsMember({"raw", "advantage"}))->capture_default_str();
    sub->add_option("--trace-points", o.trace_points)->capture_default_str();
  };
  auto* lq = app.add_subcommand("lq", "ergodic LQ, on-policy");
  add_common(lq, lq_c, {"qlearn-online", "sarsa", "pg"}, 0.1);
  add_lq(lq, lq_o);
  auto* off = app.add_subcommand("lq-off", "ergodic LQ from a fixed behavior policy");
  add_common(off, off_c, {"qlearn-online", "pg"}, 0.1);
  add_lq(off, off_o);
  off->add_option("--behavior-mean", off_o.behavior_mean)->capture_default_str();
  off->add_option("--behavior-variance", off_o.behavior_variance)->check(CLI::PositiveNumber)->capture_default_str();

  double oracle_gamma = 0.1;
  std::string oracle_out;
  auto* oracle = app.add_subcommand("oracle", "print the closed-form LQ solution");
  oracle->add_option("--gamma", oracle_gamma)->check(CLI::PositiveNumber)->capture_default_str();
  oracle->add_option("--out", oracle_out, "also write oracle.json here");

  std::uint64_t check_seed = 1;
  double check_scale = 1.0;
  auto* check = app.add_subcommand("check", "run the property suite");
  check->add_option("--seed", check_seed)->capture_default_str();
  check->add_option("--scale", check_scale, "Monte Carlo budget multiplier")->capture_default_str();

  try {
    auto args = expand_config(argc, argv);
    std::reverse(args.begin(), args.end());
    app.parse(std::move(args));
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const CLI::FileError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  if (*mv) {
    const bool full = mv_profile == "full";
    if (mv_episodes->count() == 0) mv_o.episodes = full ? 20000 : 5000;
    if (mv->get_option("--reps")->count() == 0) mv_c.reps = full ? 100 : 20;
  }
  try {
    if (*mv) return run_mv_cmd(mv_c, mv_o);
    if (*lq) return run_lq(lq_c, lq_o, false);
    if (*off) return run_lq(off_c, off_o, true);
    if (*oracle) return run_oracle(oracle_gamma, oracle_out);
    if (*check) return run_check(check_seed, check_scale);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
