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


#include <catch_amalgamated.hpp>

#include "contq/checks.hpp"

using namespace contq;

TEST_CASE("property suite passes at reduced Monte Carlo budget") {
  SuiteOptions opt;
  opt.seed = 3;
  opt.mc_scale = 0.5;
  const auto results = run_property_suite(opt);
  REQUIRE(results.size() == 9);
  for (const auto& r : results) {
    INFO(r.name << ": value " << r.value << " tolerance " << r.tolerance << " " << r.detail);
    CHECK(r.passed);
  }
}
