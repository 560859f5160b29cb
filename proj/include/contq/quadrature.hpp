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
#include <vector>

#include <Eigen/Eigenvalues>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "contq/errors.hpp"

namespace contq {

/// Nodes and weights for E[f(Z)], Z ~ N(0, 1).
struct GaussHermiteRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Probabilists' Gauss–Hermite rule via Golub–Welsch. Exact for polynomials
/// of degree < 2n.
inline GaussHermiteRule gauss_hermite(int n) {
  if (n < 1) throw ContractError("gauss_hermite: n must be >= 1");
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
  for (int i = 1; i < n; ++i) {
    jacobi(i, i - 1) = std::sqrt(static_cast<double>(i));
    jacobi(i - 1, i) = jacobi(i, i - 1);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jacobi);
  GaussHermiteRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    rule.nodes[i] = eig.eigenvalues()(i);
    const double v0 = eig.eigenvectors()(0, i);
    rule.weights[i] = v0 * v0;
  }
  return rule;
}

/// E[f(A)] for A ~ N(mean, variance) in one dimension.
template <class F>
double gaussian_expectation(F&& f, double mean, double variance, int n = 40) {
  if (!(variance > 0.0)) throw DomainError("gaussian_expectation: variance must be positive");
  const auto rule = gauss_hermite(n);
  const double s = std::sqrt(variance);
  double acc = 0.0;
  for (int i = 0; i < n; ++i) acc += rule.weights[i] * f(mean + s * rule.nodes[i]);
  return acc;
}

/// Adaptive Gauss–Kronrod integral of f over [lo, hi].
template <class F>
double integrate_interval(F f, double lo, double hi, double tol = 1e-13) {
  double err = 0.0;
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, lo, hi, 25, tol, &err);
}

}  // namespace contq
