#include "gdpo/quadrature.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <stdexcept>

namespace gdpo {

QuadScheme quad_scheme_from_string(const std::string& name) {
  if (name == "riemann_left") return QuadScheme::riemann_left;
  if (name == "riemann_midpoint") return QuadScheme::riemann_midpoint;
  if (name == "trapezoid") return QuadScheme::trapezoid;
  if (name == "simpson") return QuadScheme::simpson;
  if (name == "gauss_legendre") return QuadScheme::gauss_legendre;
  throw std::invalid_argument("unknown quadrature scheme: " + name);
}

std::string to_string(QuadScheme scheme) {
  switch (scheme) {
    case QuadScheme::riemann_left: return "riemann_left";
    case QuadScheme::riemann_midpoint: return "riemann_midpoint";
    case QuadScheme::trapezoid: return "trapezoid";
    case QuadScheme::simpson: return "simpson";
    case QuadScheme::gauss_legendre: return "gauss_legendre";
  }
  return "?";
}

namespace {

// Legendre P_n(x) and its derivative, by the three-term recurrence.
std::pair<double, double> legendre(int n, double x) {
  double p0 = 1.0, p1 = x;
  if (n == 0) return {1.0, 0.0};
  for (int k = 2; k <= n; ++k) {
    const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
    p0 = p1;
    p1 = p2;
  }
  const double dp = n * (x * p1 - p0) / (x * x - 1.0);
  return {p1, dp};
}

// Nodes/weights on [-1, 1] by Newton iteration from the Chebyshev guess.
void gauss_legendre_raw(int n, std::vector<double>& x, std::vector<double>& w) {
  x.assign(n, 0.0);
  w.assign(n, 0.0);
  const int m = (n + 1) / 2;
  for (int i = 0; i < m; ++i) {
    double xi = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double pp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      const auto [p, dp] = legendre(n, xi);
      pp = dp;
      const double dx = p / dp;
      xi -= dx;
      if (std::abs(dx) < 1e-14) break;
    }
    if (n % 2 == 1 && i == m - 1) xi = 0.0;  // central root is exact
    pp = legendre(n, xi).second;
    x[i] = -std::abs(xi);
    x[n - 1 - i] = std::abs(xi);
    const double wi = 2.0 / ((1.0 - xi * xi) * pp * pp);
    w[i] = wi;
    w[n - 1 - i] = wi;
  }
}

}  // namespace

QuadratureRule build_rule(QuadScheme scheme, int n, double t_min) {
  if (n < 1) throw std::invalid_argument("build_rule: N must be >= 1");
  QuadratureRule rule;
  rule.scheme = scheme;

  switch (scheme) {
    case QuadScheme::riemann_left: {
      rule.nodes.resize(n);
      rule.weights.assign(n, 1.0 / n);
      for (int i = 0; i < n; ++i) rule.nodes[i] = static_cast<double>(i) / n;
      break;
    }
    case QuadScheme::riemann_midpoint: {
      rule.nodes.resize(n);
      rule.weights.assign(n, 1.0 / n);
      for (int i = 0; i < n; ++i) rule.nodes[i] = (i + 0.5) / n;
      break;
    }
    case QuadScheme::trapezoid: {
      if (n < 2) throw std::invalid_argument("build_rule: trapezoid needs N >= 2");
      const double h = 1.0 / (n - 1);
      rule.nodes.resize(n);
      rule.weights.assign(n, h);
      rule.weights.front() = rule.weights.back() = h / 2.0;
      for (int i = 0; i < n; ++i) rule.nodes[i] = i * h;
      break;
    }
    case QuadScheme::simpson: {
      if (n < 3 || n % 2 == 0)
        throw std::invalid_argument("build_rule: simpson needs odd N >= 3");
      const double h = 1.0 / (n - 1);
      rule.nodes.resize(n);
      rule.weights.assign(n, 0.0);
      for (int i = 0; i < n; ++i) {
        rule.nodes[i] = i * h;
        if (i == 0 || i == n - 1) {
          rule.weights[i] = h / 3.0;
        } else if (i % 2 == 1) {
          rule.weights[i] = 4.0 * h / 3.0;
        } else {
          rule.weights[i] = 2.0 * h / 3.0;
        }
      }
      break;
    }
    case QuadScheme::gauss_legendre: {
      std::vector<double> x, w;
      gauss_legendre_raw(n, x, w);
      rule.nodes.resize(n);
      rule.weights.resize(n);
      for (int i = 0; i < n; ++i) {
        rule.nodes[i] = 0.5 * (x[i] + 1.0);
        rule.weights[i] = 0.5 * w[i];
      }
      break;
    }
  }

  // Relocate a node sitting at t = 0; the weight is unchanged so the weight
  // sum stays exactly 1.
  if (!rule.nodes.empty() && rule.nodes.front() == 0.0) {
    if (!(t_min > 0.0 && t_min < rule.nodes[1]))
      throw std::invalid_argument("build_rule: t_min must lie in (0, second node)");
    rule.nodes.front() = t_min;
    rule.t_min = t_min;
    rule.clamp_weight = rule.weights.front();
  }
  return rule;
}

double integrate(const QuadratureRule& rule, const std::function<double(double)>& f) {
  double sum = 0.0, c = 0.0;
  for (int i = 0; i < rule.size(); ++i) {
    const double v = rule.weights[i] * f(rule.nodes[i]);
    if (!std::isfinite(v)) throw std::runtime_error("integrate: non-finite integrand value");
    const double y = v - c;
    const double t = sum + y;
    c = (t - sum) - y;
    sum = t;
  }
  return sum;
}

std::string rule_to_csv(const QuadratureRule& rule) {
  std::string out = "node,weight\n";
  char buf[64];
  for (int i = 0; i < rule.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n", rule.nodes[i], rule.weights[i]);
    out += buf;
  }
  return out;
}

}  // namespace gdpo
