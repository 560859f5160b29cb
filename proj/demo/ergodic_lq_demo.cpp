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


// Learns the ergodic LQ policy online and compares it with the closed form.

#include <cstdio>

#include "contq/contq.hpp"

int main() {
  using namespace contq;
  const auto sol = lq_ergodic_fixed_point(LqParams::reference(), 0.1);
  std::printf("closed form: a ~ N(%.5f x %+.5f, %.5f), V = %.5f\n", sol.policy.slope, sol.policy.intercept,
              sol.policy.var, sol.V);

  ErgodicConfig cfg;
  cfg.horizon = 2e4;
  cfg.seed = 7;
  for (auto algo : {ErgodicAlgo::kQLearning, ErgodicAlgo::kSarsa}) {
    const auto run = run_ergodic(cfg, algo, 0);
    if (!run.ok()) {
      std::printf("%-14s diverged (%s)\n", to_string(algo).c_str(), run.failure.c_str());
      continue;
    }
    const auto& m = run.metrics;
    std::printf("%-14s a ~ N(%.5f x %+.5f, %.5f), average reward %.4f\n", to_string(algo).c_str(),
                m.at("policy_slope"), m.at("policy_intercept"), m.at("policy_variance"), m.at("final_avg_reward"));
  }
  std::printf("initial policy N(0, 1) earns %.4f; the optimum earns %.4f\n", ergodic_initial_reward(cfg),
              sol.mean_reward());
  return 0;
}
