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

#include "contq/approx.hpp"
#include "contq/baselines.hpp"
#include "contq/checks.hpp"
#include "contq/envsim.hpp"
#include "contq/errors.hpp"
#include "contq/experiments.hpp"
#include "contq/learners.hpp"
#include "contq/oracle.hpp"
#include "contq/quadrature.hpp"
#include "contq/rng.hpp"
#include "contq/trajectory_io.hpp"
