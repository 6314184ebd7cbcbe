#pragma once

#include <span>
#include <vector>

namespace gdpo {

double mean(std::span<const double> xs);

// Unbiased sample variance (ddof = 1); requires at least two values.
double sample_variance(std::span<const double> xs);

// Population variance (ddof = 0).
double population_variance(std::span<const double> xs);

// Kahan-compensated sum; used where 1e-12 agreement between two algebraic
// routes is asserted.
double stable_sum(std::span<const double> xs);

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  double slope_stderr = 0.0;
  size_t n_points = 0;
};

// Least squares of log(y) on log(x). Points with y <= 0 are dropped (a bias
// can be exactly zero at quadrature-exact settings).
LineFit fit_loglog(std::span<const double> xs, std::span<const double> ys);

LineFit fit_line(std::span<const double> xs, std::span<const double> ys);

}  // namespace gdpo
