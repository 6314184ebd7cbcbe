#include <doctest.h>

#include <cmath>
#include <vector>

#include "gdpo/quadrature.hpp"
#include "gdpo/stats.hpp"

using namespace gdpo;

TEST_SUITE("quadrature") {

TEST_CASE("weights sum to one and nodes stay positive") {
  for (auto scheme : {QuadScheme::riemann_left, QuadScheme::riemann_midpoint,
                      QuadScheme::trapezoid, QuadScheme::simpson, QuadScheme::gauss_legendre}) {
    for (int n : {1, 2, 3, 5, 9, 17, 33}) {
      if (scheme == QuadScheme::trapezoid && n < 2) continue;
      if (scheme == QuadScheme::simpson && (n < 3 || n % 2 == 0)) continue;
      const auto rule = build_rule(scheme, n);
      double wsum = 0.0;
      for (int i = 0; i < rule.size(); ++i) {
        CHECK(rule.nodes[i] > 0.0);
        CHECK(rule.nodes[i] <= 1.0);
        CHECK(rule.weights[i] > 0.0);
        wsum += rule.weights[i];
        if (i > 0) CHECK(rule.nodes[i] > rule.nodes[i - 1]);
      }
      CHECK(std::abs(wsum - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("invalid N rejected per scheme") {
  CHECK_THROWS_AS(build_rule(QuadScheme::riemann_midpoint, 0), std::invalid_argument);
  CHECK_THROWS_AS(build_rule(QuadScheme::trapezoid, 1), std::invalid_argument);
  CHECK_THROWS_AS(build_rule(QuadScheme::simpson, 4), std::invalid_argument);
  CHECK_THROWS_AS(build_rule(QuadScheme::simpson, 1), std::invalid_argument);
}

TEST_CASE("midpoint N=1 is the center point and integrates t exactly") {
  const auto rule = build_rule(QuadScheme::riemann_midpoint, 1);
  REQUIRE(rule.size() == 1);
  CHECK(rule.nodes[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(rule.weights[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(integrate(rule, [](double t) { return t; }) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("gauss N=2 nodes, weights, and cubic exactness") {
  const auto rule = build_rule(QuadScheme::gauss_legendre, 2);
  REQUIRE(rule.size() == 2);
  const double off = 1.0 / (2.0 * std::sqrt(3.0));
  CHECK(std::abs(rule.nodes[0] - (0.5 - off)) < 1e-14);
  CHECK(std::abs(rule.nodes[1] - (0.5 + off)) < 1e-14);
  CHECK(std::abs(rule.weights[0] - 0.5) < 1e-14);
  CHECK(std::abs(rule.weights[1] - 0.5) < 1e-14);
  for (int k = 0; k <= 3; ++k) {
    const double got = integrate(rule, [k](double t) { return std::pow(t, k); });
    CHECK(std::abs(got - 1.0 / (k + 1)) < 1e-12);
  }
}

TEST_CASE("gauss exactness up to degree 2N-1") {
  for (int n = 1; n <= 6; ++n) {
    const auto rule = build_rule(QuadScheme::gauss_legendre, n);
    for (int k = 0; k <= 2 * n - 1; ++k) {
      const double got = integrate(rule, [k](double t) { return std::pow(t, k); });
      CHECK(std::abs(got - 1.0 / (k + 1)) < 1e-12);
    }
    // one degree beyond is inexact
    const int k = 2 * n;
    const double got = integrate(rule, [k](double t) { return std::pow(t, k); });
    CHECK(std::abs(got - 1.0 / (k + 1)) > 1e-10);
  }
}

TEST_CASE("simpson N=3 on t^3") {
  const auto rule = build_rule(QuadScheme::simpson, 3);
  const double got = integrate(rule, [](double t) { return t * t * t; });
  // exact 0.25 up to the endpoint relocation, which perturbs by w0 * t_min^3
  CHECK(std::abs(got - 0.25) < 1e-9);
}

TEST_CASE("constant integrand is exact for every rule") {
  for (auto scheme : {QuadScheme::riemann_left, QuadScheme::riemann_midpoint,
                      QuadScheme::trapezoid, QuadScheme::simpson, QuadScheme::gauss_legendre}) {
    const int n = scheme == QuadScheme::simpson ? 5 : 4;
    const auto rule = build_rule(scheme, n);
    CHECK(std::abs(integrate(rule, [](double) { return -3.25; }) + 3.25) < 1e-12);
  }
}

TEST_CASE("clamped endpoint bookkeeping") {
  const auto trap = build_rule(QuadScheme::trapezoid, 5);
  CHECK(trap.t_min == doctest::Approx(1e-3));
  CHECK(trap.nodes.front() == doctest::Approx(1e-3));
  CHECK(trap.clamp_weight == doctest::Approx(trap.weights.front()));
  const auto mid = build_rule(QuadScheme::riemann_midpoint, 5);
  CHECK(mid.t_min == 0.0);
  CHECK(mid.clamp_weight == 0.0);
  const auto gauss = build_rule(QuadScheme::gauss_legendre, 5);
  CHECK(gauss.t_min == 0.0);
}

TEST_CASE("empirical convergence orders on exp(t)") {
  // the clamp perturbation is subtracted analytically so the fitted slope
  // reflects the rule error alone
  auto f = [](double t) { return std::exp(t); };
  const double truth = std::exp(1.0) - 1.0;
  auto bias_of = [&](QuadScheme scheme, int n) {
    const auto rule = build_rule(scheme, n);
    double est = integrate(rule, f);
    if (rule.clamp_weight > 0.0) est -= rule.clamp_weight * (f(rule.t_min) - f(0.0));
    return std::abs(est - truth);
  };
  auto slope_of = [&](QuadScheme scheme, const std::vector<double>& ns) {
    std::vector<double> errs;
    for (double n : ns) errs.push_back(bias_of(scheme, static_cast<int>(n)));
    return fit_loglog(ns, errs).slope;
  };
  CHECK(std::abs(slope_of(QuadScheme::riemann_midpoint, {4, 8, 16, 32, 64}) + 2.0) < 0.3);
  CHECK(std::abs(slope_of(QuadScheme::trapezoid, {4, 8, 16, 32, 64}) + 2.0) < 0.3);
  CHECK(std::abs(slope_of(QuadScheme::simpson, {5, 9, 17, 33, 65}) + 4.0) < 0.5);
  CHECK(std::abs(slope_of(QuadScheme::riemann_left, {4, 8, 16, 32, 64}) + 1.0) < 0.3);
}

TEST_CASE("simpson vs coarse simpson error ratio on exp") {
  auto f = [](double t) { return std::exp(t); };
  const double truth = std::exp(1.0) - 1.0;
  auto err = [&](int n) {
    const auto rule = build_rule(QuadScheme::simpson, n);
    double est = integrate(rule, f);
    est -= rule.clamp_weight * (f(rule.t_min) - f(0.0));
    return std::abs(est - truth);
  };
  const double ratio = err(5) / err(65);
  // h shrinks 16x, so an O(h^4) rule improves by ~16^4
  const double slope = std::log(ratio) / std::log(16.0);
  CHECK(std::abs(slope - 4.0) < 0.5);
}

TEST_CASE("integrate rejects non-finite values") {
  const auto rule = build_rule(QuadScheme::riemann_midpoint, 3);
  CHECK_THROWS_AS(integrate(rule, [](double) { return std::nan(""); }), std::runtime_error);
}

TEST_CASE("rule csv export") {
  const auto rule = build_rule(QuadScheme::gauss_legendre, 2);
  const auto csv = rule_to_csv(rule);
  CHECK(csv.find("node,weight") == 0);
  CHECK(csv.find('\n') != std::string::npos);
}

}  // TEST_SUITE
