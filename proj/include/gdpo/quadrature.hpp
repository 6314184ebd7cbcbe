#pragma once

#include <functional>
#include <string>
#include <vector>

namespace gdpo {

enum class QuadScheme {
  riemann_left,
  riemann_midpoint,
  trapezoid,
  simpson,
  gauss_legendre,
};

QuadScheme quad_scheme_from_string(const std::string& name);
std::string to_string(QuadScheme scheme);

// Node/weight set for the unit interval. Weights always sum to 1. Schemes
// whose node set touches t = 0 (left Riemann, trapezoid, simpson) have that
// endpoint moved to t_min so integrands carrying a 1/t factor stay finite;
// the induced perturbation is w_0 * (g(t_min) - g(0)) and is surfaced via
// clamp_weight/clamp_node for reporting.
struct QuadratureRule {
  QuadScheme scheme;
  std::vector<double> nodes;    // strictly positive, ascending
  std::vector<double> weights;  // positive, sum to 1
  double t_min = 0.0;           // 0 when no clamp was needed
  double clamp_weight = 0.0;    // weight of the relocated endpoint node

  int size() const { return static_cast<int>(nodes.size()); }
};

constexpr double kDefaultTimeFloor = 1e-3;

// Builds a rule with N points. simpson requires N odd and >= 3; trapezoid
// requires N >= 2.
QuadratureRule build_rule(QuadScheme scheme, int n, double t_min = kDefaultTimeFloor);

// Sum of w_n * f(t_n); throws if f produces a non-finite value.
double integrate(const QuadratureRule& rule, const std::function<double(double)>& f);

// (node, weight) rows for audit.
std::string rule_to_csv(const QuadratureRule& rule);

}  // namespace gdpo
