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
#include <numbers>

#include <catch_amalgamated.hpp>

#include "contq/approx.hpp"
#include "contq/quadrature.hpp"
#include "support/oracles.hpp"

using namespace contq;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

template <class F, class G>
void check_gradient(F value_at, G grad, int n, double tol = 1e-6) {
  for (int i = 0; i < n; ++i) {
    const double fd = oracles::derivative([&](double h) { return value_at(i, h); }, 0.0, 1e-6);
    REQUIRE_THAT(grad(i), WithinAbs(fd, tol * std::max(1.0, std::abs(fd))));
  }
}

}  // namespace

TEST_CASE("Gaussian normalizer makes exp(q / gamma) a density") {
  const double gamma = 0.1;
  SECTION("closed-form values") {
    REQUIRE_THAT(gaussian_q_normalizer(Scalar1::Constant(1.0), gamma), WithinAbs(0.023235401329235014, 1e-15));
    REQUIRE_THAT(gaussian_q_normalizer(Scalar1::Constant(2.0), gamma), WithinAbs(0.05789276035723228, 1e-15));
    REQUIRE_THAT(gaussian_q_normalizer(Scalar1::Constant(2.0 * std::numbers::pi), gamma),
                 WithinAbs(0.11512925464970228, 1e-15));
  }
  SECTION("integral is one") {
    for (double q2 : {0.3, 1.0, 2.0, 7.5}) {
      const double q0 = gaussian_q_normalizer(Scalar1::Constant(q2), gamma);
      const double mass =
          integrate_interval([&](double a) { return std::exp((-0.5 * q2 * (a - 0.4) * (a - 0.4) + q0) / gamma); },
                             -20.0, 20.0);
      REQUIRE_THAT(mass, WithinAbs(1.0, 1e-10));
    }
  }
  SECTION("two-dimensional normalizer matches a product") {
    Eigen::Matrix2d q2;
    q2 << 2.0, 0.0, 0.0, 3.0;
    const double expect = gaussian_q_normalizer(Scalar1::Constant(2.0), gamma) +
                          gaussian_q_normalizer(Scalar1::Constant(3.0), gamma);
    REQUIRE_THAT(gaussian_q_normalizer(q2, gamma), WithinAbs(expect, 1e-14));
  }
  SECTION("invalid inputs") {
    REQUIRE_THROWS_AS(gaussian_q_normalizer(Scalar1::Constant(-1.0), gamma), DomainError);
    REQUIRE_THROWS_AS(gaussian_q_normalizer(Scalar1::Constant(1.0), 0.0), ContractError);
    Eigen::Matrix2d bad;
    bad << 1.0, 2.0, 2.0, 1.0;
    REQUIRE_THROWS_AS(gaussian_q_normalizer(bad, gamma), DomainError);
  }
}

TEST_CASE("lq_q induced policy, value and entropy") {
  const auto q = lq_q(ParamVec<3>::Zero(), 0.1);
  const auto x = scalar_state(1.0);
  REQUIRE(q.mean(0.0, x)(0) == 0.0);
  REQUIRE_THAT(q.variance(0.0, x)(0, 0), WithinAbs(0.1, 1e-15));
  REQUIRE_THAT(q.value(0.0, x, scalar_action(0.0)), WithinAbs(0.023235401329235014, 1e-15));
  REQUIRE_THAT(policy_entropy(induced_policy(q), 0.0, x), WithinAbs(0.26764598670764983, 1e-14));
  REQUIRE_THROWS_AS(lq_q(ParamVec<3>::Zero(), 0.0), ContractError);
}

TEST_CASE("gamma log pi equals q for every normalized Gaussian family") {
  RngStream rng(5, {0, 0});
  for (int i = 0; i < 50; ++i) {
    const ParamVec<3> psi(rng.normal(), rng.normal(), rng.normal());
    const auto x = scalar_state(rng.normal());
    const auto a = scalar_action(2.0 * rng.normal());
    const double t = 0.9 * rng.uniform();
    const auto lq = lq_q(psi, 0.2);
    REQUIRE_THAT(0.2 * policy_log_density(lq, t, x, a), WithinAbs(lq.value(t, x, a), 1e-12));
    const auto mv = mv_q(psi, 1.1, 0.2, 1.0);
    REQUIRE_THAT(0.2 * policy_log_density(mv, t, x, a), WithinAbs(mv.value(t, x, a), 1e-12));
    REQUIRE_THAT(mv.value(t, x, a), WithinAbs(gaussian_q_value(mv.mean(t, x), mv.precision(t, x), 0.2, a), 1e-12));
  }
}

TEST_CASE("QuadraticValue") {
  const auto J = lq_value(ParamVec<2>(1.0, 2.0));
  REQUIRE_THAT(J.value(0.0, scalar_state(3.0)), WithinAbs(15.0, 1e-15));
  REQUIRE(J.grad_theta(0.0, scalar_state(3.0)) == ParamVec<2>(9.0, 3.0));
  REQUIRE_THAT(J.state_gradient(0.0, scalar_state(3.0))(0), WithinAbs(8.0, 1e-15));
  REQUIRE_THAT(J.state_hessian(0.0, scalar_state(3.0))(0, 0), WithinAbs(2.0, 1e-15));
}

TEST_CASE("MeanVarianceValue") {
  const auto J = mv_value(ParamVec<3>::Zero(), 1.4, 1.4, 1.0);
  REQUIRE_THAT(J.value(1.0, scalar_state(1.0)), WithinAbs(0.16, 1e-15));
  REQUIRE_THAT(J.grad_theta(0.0, scalar_state(1.0))(2), WithinAbs(-0.16, 1e-15));
  SECTION("terminal condition holds for every theta") {
    RngStream rng(2, {0, 0});
    for (int i = 0; i < 20; ++i) {
      const auto Jr = mv_value(ParamVec<3>(rng.normal(), rng.normal(), rng.normal()), 1.2, 1.4, 1.0);
      const auto x = scalar_state(rng.normal());
      REQUIRE_THAT(Jr.value(1.0, x), WithinAbs(Jr.terminal_value(x), 1e-14));
    }
  }
  SECTION("negation flips value, gradient and derivatives") {
    const auto base = mv_value(ParamVec<3>(0.1, -0.2, 0.3), 1.2, 1.4, 1.0);
    const NegatedValue<MeanVarianceValue> neg(base);
    const auto x = scalar_state(0.8);
    REQUIRE(neg.value(0.4, x) == -base.value(0.4, x));
    REQUIRE(neg.grad_theta(0.4, x) == -base.grad_theta(0.4, x));
    REQUIRE(neg.terminal_value(x) == -base.terminal_value(x));
    REQUIRE(neg.time_derivative(0.4, x) == -base.time_derivative(0.4, x));
    REQUIRE(neg.state_hessian(0.4, x) == -base.state_hessian(0.4, x));
  }
}

TEST_CASE("parameter gradients match central differences") {
  RngStream rng(8, {0, 0});
  const double gamma = 0.15;
  for (int rep = 0; rep < 10; ++rep) {
    const ParamVec<3> p3(0.5 * rng.normal(), 0.5 * rng.normal(), 0.5 * rng.normal());
    const auto x = scalar_state(rng.normal());
    const auto a = scalar_action(rng.normal());
    const double t = 0.8 * rng.uniform();
    auto bump = [](ParamVec<3> v, int i, double h) {
      v(i) += h;
      return v;
    };
    check_gradient([&](int i, double h) { return lq_q(bump(p3, i, h), gamma).value(t, x, a); },
                   [&](int i) { return lq_q(p3, gamma).grad_psi(t, x, a)(i); }, 3);
    check_gradient([&](int i, double h) { return mv_q(bump(p3, i, h), 1.1, gamma, 1.0).value(t, x, a); },
                   [&](int i) { return mv_q(p3, 1.1, gamma, 1.0).grad_psi(t, x, a)(i); }, 3);
    check_gradient([&](int i, double h) { return mv_value(bump(p3, i, h), 1.1, 1.4, 1.0).value(t, x); },
                   [&](int i) { return mv_value(p3, 1.1, 1.4, 1.0).grad_theta(t, x)(i); }, 3);
  }
}

TEST_CASE("state derivatives of the value families") {
  const auto J = mv_value(ParamVec<3>(0.3, -0.1, 0.7), 1.2, 1.4, 1.0);
  const double t = 0.3, x = 0.9;
  auto at = [&](double tt, double xx) { return J.value(tt, scalar_state(xx)); };
  REQUIRE_THAT(J.time_derivative(t, scalar_state(x)),
               WithinAbs(oracles::derivative([&](double s) { return at(s, x); }, t), 1e-7));
  REQUIRE_THAT(J.state_gradient(t, scalar_state(x))(0),
               WithinAbs(oracles::derivative([&](double s) { return at(t, s); }, x), 1e-7));
  REQUIRE_THAT(J.state_hessian(t, scalar_state(x))(0, 0),
               WithinAbs((at(t, x + 1e-4) - 2.0 * at(t, x) + at(t, x - 1e-4)) / 1e-8, 1e-5));
}

TEST_CASE("policy sampling matches the declared moments") {
  const auto q = mv_q(ParamVec<3>(-1.0, 2.0, 0.5), 1.0, 0.2, 1.0);
  const auto x = scalar_state(1.3);
  RngStream rng(4, {0, 0});
  const int n = 100000;
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double a = policy_sample(q, 0.2, x, rng)(0);
    s += a;
    s2 += a * a;
  }
  const double m = s / n, v = s2 / n - m * m;
  REQUIRE_THAT(m, WithinAbs(q.mean(0.2, x)(0), 4.0 * std::sqrt(q.variance(0.2, x)(0, 0) / n)));
  REQUIRE_THAT(v, WithinRel(q.variance(0.2, x)(0, 0), 0.03));
}

TEST_CASE("custom families add the normalizer and honor the concepts") {
  using State = ScalarEnv::State;
  using Action = ScalarEnv::Action;
  CustomGaussianQ<State, Action> q;
  q.psi = Eigen::VectorXd::Constant(1, 0.7);
  q.gamma = 0.1;
  q.q1 = [](const Eigen::VectorXd& p, double, const State& x) { return Action::Constant(p(0) * x(0)); };
  q.q2 = [](const Eigen::VectorXd&, double, const State&) { return Scalar1::Constant(2.0); };
  q.grad = [](const Eigen::VectorXd&, double, const State& x, const Action& a) {
    return Eigen::VectorXd::Constant(1, 2.0 * (a(0) - 0.7 * x(0)) * x(0));
  };
  static_assert(GaussianQApprox<CustomGaussianQ<State, Action>>);
  REQUIRE_THAT(q.value(0.0, scalar_state(1.0), scalar_action(0.7)), WithinAbs(0.05789276035723228, 1e-15));
  REQUIRE_THAT(q.variance(0.0, scalar_state(1.0))(0, 0), WithinAbs(0.05, 1e-15));

  CustomValueApprox<State> J;
  J.theta = Eigen::VectorXd::Constant(1, 3.0);
  J.eval = [](const Eigen::VectorXd& th, double, const State& x) { return th(0) * x(0); };
  J.grad = [](const Eigen::VectorXd&, double, const State& x) { return Eigen::VectorXd::Constant(1, x(0)); };
  static_assert(ValueApprox<CustomValueApprox<State>>);
  REQUIRE(J.value(0.0, scalar_state(2.0)) == 6.0);
}

TEST_CASE("Gauss-Hermite expectations") {
  REQUIRE_THAT(gaussian_expectation([](double a) { return a * a * a * a; }, 0.0, 1.0, 10), WithinAbs(3.0, 1e-12));
  REQUIRE_THAT(gaussian_expectation([](double a) { return a * a; }, 1.0, 2.0, 5), WithinAbs(3.0, 1e-12));
  REQUIRE_THROWS_AS(gaussian_expectation([](double a) { return a; }, 0.0, 0.0), DomainError);
}

TEST_CASE("parameter snapshot round trip") {
  ParameterSnapshot s{"x", {1.0, 2.0}, {3.0}, 0.1, 1.25, std::nullopt, true};
  const nlohmann::json j = s;
  const auto back = j.get<ParameterSnapshot>();
  REQUIRE(back.name == "x");
  REQUIRE(back.theta == s.theta);
  REQUIRE(back.psi == s.psi);
  REQUIRE(back.w == 1.25);
  REQUIRE_FALSE(back.V.has_value());
  REQUIRE(back.oracle);
}
