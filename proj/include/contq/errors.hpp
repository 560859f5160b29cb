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

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace contq {

/// Precondition or argument violation at an API boundary.
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A mathematical object left its domain (non-SPD matrix, failed Cholesky).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// The state left the finite region during simulation.
class SimulationDiverged : public std::runtime_error {
 public:
  SimulationDiverged(double t, std::vector<double> x, std::vector<double> a)
      : std::runtime_error("simulation diverged at t=" + std::to_string(t)),
        t_(t),
        x_(std::move(x)),
        a_(std::move(a)) {}

  double time() const { return t_; }
  const std::vector<double>& state() const { return x_; }
  const std::vector<double>& action() const { return a_; }

 private:
  double t_;
  std::vector<double> x_;
  std::vector<double> a_;
};

/// A learner produced a non-finite (or exploded) parameter vector.
/// Carries the last finite parameters, flattened.
class ParameterDiverged : public std::runtime_error {
 public:
  explicit ParameterDiverged(std::vector<double> last_finite)
      : std::runtime_error("learner parameters diverged"), last_(std::move(last_finite)) {}

  const std::vector<double>& last_finite() const { return last_; }

 private:
  std::vector<double> last_;
};

/// The LQ data admits no stabilizing exploratory solution.
class InfeasibleProblem : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The Hamiltonian is not strictly concave in the action.
class ImprovementUndefined : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace contq
