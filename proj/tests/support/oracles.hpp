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

// Reference computations written independently of the library code paths
// they are compared against.

#pragma once

#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

#include "contq/envsim.hpp"

namespace oracles {

/// Entropy-regularized long-run average of a ~ N(k x + c, v) on the scalar
/// LQ problem, from the stationary first and second moments of X.
inline double lq_stationary_value(const contq::LqParams& p, double gamma, double k, double c, double v) {
  const double alpha = p.A + p.B * k;
  const double b0 = p.B * c;
  const double s = p.C + p.D * k;
  const double m1 = -b0 / alpha;
  const double m2 = -(2.0 * b0 * m1 + 2.0 * s * p.D * c * m1 + p.D * p.D * (c * c + v)) / (2.0 * alpha + s * s);
  const double exa = k * m2 + c * m1;
  const double ea2 = k * k * m2 + 2.0 * k * c * m1 + c * c + v;
  const double ea = k * m1 + c;
  const double er = -(0.5 * p.M * m2 + p.R * exa + 0.5 * p.N * ea2 + p.P * m1 + p.Q * ea);
  return er + 0.5 * gamma * std::log(2.0 * std::numbers::pi * std::numbers::e * v);
}

/// Optimal exploratory mean-variance solution in the reward convention:
/// J(t,x) = -(x-w)^2 e^{-rho^2 (T-t)} - (gamma rho^2 / 4)(T^2 - t^2)
///          + (gamma/2)(rho^2 T - log(sigma^2 / (pi gamma)))(T - t) + (w-z)^2,
/// pi = N(-(mu/sigma^2)(x-w), (gamma / (2 sigma^2)) e^{rho^2 (T-t)}).
/// Parameters are returned in the learners' (theta, psi) coordinates.
struct MvSolution {
  double theta[3];
  double psi[3];
};

inline MvSolution mv_solution(double mu, double sigma, double gamma, double T) {
  const double rho2 = (mu / sigma) * (mu / sigma);
  MvSolution s{};
  s.theta[0] = 0.5 * gamma * (rho2 * T - std::log(sigma * sigma / (std::numbers::pi * gamma)));
  s.theta[1] = -0.25 * gamma * rho2;
  s.theta[2] = rho2;
  s.psi[0] = -std::log(2.0 * sigma * sigma);
  s.psi[1] = mu / (sigma * sigma);
  s.psi[2] = rho2;
  return s;
}

/// G_{t_k:T} by the defining double sum.
template <class Jf, class Qf>
std::vector<double> martingale_residuals_direct(const std::vector<double>& t, const std::vector<double>& x,
                                                const std::vector<double>& a, const std::vector<double>& r,
                                                double terminal, double beta, Jf J, Qf q) {
  const std::size_t K = a.size();
  const double dt = t[1] - t[0];
  std::vector<double> g(K);
  for (std::size_t k = 0; k < K; ++k) {
    double acc = std::exp(-beta * (t[K] - t[k])) * terminal - J(t[k], x[k]);
    for (std::size_t i = k; i < K; ++i) acc += std::exp(-beta * (t[i] - t[k])) * (r[i] - q(t[i], x[i], a[i])) * dt;
    g[k] = acc;
  }
  return g;
}

/// Central difference of a scalar function.
inline double derivative(const std::function<double(double)>& f, double at, double h = 1e-6) {
  return (f(at + h) - f(at - h)) / (2.0 * h);
}

/// Sample mean and standard error.
inline std::pair<double, double> mean_and_se(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s2 = 0.0;
  for (double x : v) s2 += (x - m) * (x - m);
  s2 /= static_cast<double>(v.size() - 1);
  return {m, std::sqrt(s2 / static_cast<double>(v.size()))};
}

}  // namespace oracles
