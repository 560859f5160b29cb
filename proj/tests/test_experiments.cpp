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
#include <limits>

#include <catch_amalgamated.hpp>

#include "contq/experiments.hpp"

using namespace contq;
using Catch::Matchers::WithinAbs;

TEST_CASE("terminal metrics") {
  const auto m = metrics_terminal({1.2, 1.4}, 1.0);
  REQUIRE_THAT(m.mean, WithinAbs(1.3, 1e-15));
  REQUIRE_THAT(m.variance, WithinAbs(0.02, 1e-15));
  REQUIRE_THAT(m.sharpe, WithinAbs(2.1213203435596424, 1e-12));
  REQUIRE(metrics_terminal({1.1, 1.1}, 1.0).sharpe == std::numeric_limits<double>::infinity());
  REQUIRE_THROWS_AS(metrics_terminal({1.0}, 1.0), ContractError);
}

TEST_CASE("running average and Lagrange step") {
  REQUIRE(running_average_reward({1.0, 3.0}) == std::vector<double>{1.0, 2.0});
  REQUIRE_THAT(lagrange_update(1.4, {1.38}, 0.005, 1.4), WithinAbs(1.4001, 1e-15));
  REQUIRE_THAT(lagrange_update(1.4, {1.38}, 0.005, 1.4, true), WithinAbs(1.4 - 0.005 * 1.38, 1e-15));
  REQUIRE_THROWS_AS(lagrange_update(1.4, {}, 0.005, 1.4), ContractError);
}

TEST_CASE("initial policy reward on the reference problem") {
  REQUIRE_THAT(ergodic_initial_reward(ErgodicConfig{}), WithinAbs(-1.5, 1e-14));
}

TEST_CASE("ergodic runs are reproducible and well formed") {
  ErgodicConfig cfg;
  cfg.horizon = 200.0;
  cfg.seed = 17;
  for (auto algo : {ErgodicAlgo::kQLearning, ErgodicAlgo::kSarsa, ErgodicAlgo::kPolicyGradient}) {
    const auto a = run_ergodic(cfg, algo, 2);
    const auto b = run_ergodic(cfg, algo, 2);
    REQUIRE(a.ok());
    REQUIRE(a.final_params == b.final_params);
    REQUIRE(a.metrics == b.metrics);
    REQUIRE(a.trace.size() == 201);
    REQUIRE(a.trace.front().size() == a.trace_columns.size());
    REQUIRE(a.metrics.count("final_avg_reward") == 1);
    REQUIRE(a.running_average.size() == 200);
    const auto c = run_ergodic(cfg, algo, 3);
    REQUIRE(c.final_params != a.final_params);
  }
}

TEST_CASE("off-policy runs record no running average") {
  ErgodicConfig cfg;
  cfg.horizon = 100.0;
  cfg.off_policy = true;
  const auto r = run_ergodic(cfg, ErgodicAlgo::kQLearning, 0);
  REQUIRE(r.ok());
  REQUIRE(r.mode == "off-policy");
  REQUIRE(r.running_average.empty());
  REQUIRE(r.metrics.count("final_avg_reward") == 0);
}

TEST_CASE("diverging runs are reported as NA") {
  ErgodicConfig cfg;
  cfg.horizon = 100.0;
  cfg.alpha = 50.0;
  const auto r = run_ergodic(cfg, ErgodicAlgo::kQLearning, 0);
  REQUIRE_FALSE(r.ok());
  const auto s = summarize({r, run_ergodic(ErgodicConfig{.horizon = 50.0}, ErgodicAlgo::kQLearning, 1)});
  REQUIRE(s["aggregate"]["n_diverged"] == 1);
  REQUIRE(s["aggregate"]["n_ok"] == 1);
  REQUIRE(s["replications"][0]["status"] == "NA");
}

TEST_CASE("mean-variance runs are reproducible") {
  MvExperimentConfig cfg;
  cfg.episodes = 40;
  cfg.batch = 4;
  cfg.eval_runs = 10;
  cfg.seed = 5;
  for (auto algo : {MvAlgo::kQLearnMl, MvAlgo::kQLearnTd, MvAlgo::kSarsa, MvAlgo::kPolicyGradient}) {
    const auto a = run_mv(cfg, algo, 0);
    const auto b = run_mv(cfg, algo, 0);
    REQUIRE(a.ok());
    REQUIRE(a.metrics == b.metrics);
    REQUIRE(a.metrics.count("sharpe") == 1);
    REQUIRE(a.metrics.count("w") == 1);
    REQUIRE_FALSE(a.trace.empty());
  }
}

TEST_CASE("summary aggregation is ordered and deterministic") {
  ErgodicConfig cfg;
  cfg.horizon = 50.0;
  auto fn = [&](int r) { return run_ergodic(cfg, ErgodicAlgo::kSarsa, r); };
  const auto serial = summarize(run_replications(4, fn, 1));
  const auto threaded = summarize(run_replications(4, fn, 3));
  REQUIRE(serial.dump() == threaded.dump());
  REQUIRE(serial["reps"] == 4);
  REQUIRE(serial["replications"][3]["replication"] == 3);
  REQUIRE(metric_json(std::numeric_limits<double>::infinity()) == "inf");
}
