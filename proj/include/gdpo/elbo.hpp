#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gdpo/policy.hpp"
#include "gdpo/quadrature.hpp"

namespace gdpo {

struct NodeContribution {
  double t = 0.0;
  double weight = 0.0;
  double inner = 0.0;
};

struct ElboEstimate {
  std::string estimator;
  double value = 0.0;
  long n_model_evals = 0;
  std::vector<NodeContribution> per_node;
  // Variance of the estimate itself (not of single draws), when measurable.
  std::optional<double> empirical_variance;
};

// Monte Carlo estimate of the masked-denoising integrand at a fixed time:
// average over K corruption draws of (1/t) * sum of masked log-probs.
// Unbiased for g(t) below. Costs K model evaluations.
double integrand_mc(const DenoiserPolicy& policy, const MaskedSequence& y, double t, int k_draws,
                    RngStream& rng);

// g(t): exact expectation of the integrand over all mask patterns. The
// coefficients A_c (sums over patterns of fixed cardinality) are gathered
// once per instance, making g a cheap degree-(L-1) polynomial and the full
// time integral a closed-form subset-weighted sum.
class ExactIntegrand {
 public:
  ExactIntegrand(const DenoiserPolicy& policy, const MaskedSequence& y);

  double at(double t) const;
  double integral() const;  // exact integral over (0, 1]

  // Conditional mean of the integrand given t > t_min, i.e.
  // integral over (t_min, 1] divided by (1 - t_min). This is the estimand of
  // every t_min-clamped sampler; the gap to integral() is the clamp
  // correction that estimator reports surface.
  double clamped_mean(double t_min) const;

  int completion_len() const { return len_; }
  // Sum of masked log-prob sums over patterns of each cardinality (index 1..L).
  const std::vector<double>& cardinality_sums() const { return card_sums_; }

 private:
  int len_ = 0;
  std::vector<double> card_sums_;
};

double integrand_exact(const DenoiserPolicy& policy, const MaskedSequence& y, double t);

// Ground-truth sequence ELBO via per-pattern Beta integrals. L <= 20.
ElboEstimate elbo_exact(const DenoiserPolicy& policy, const MaskedSequence& y);

// Both the time and the corruption sampled; time is uniform on (t_min, 1] so
// the 1/t factor stays bounded. Unbiased for the clamped mean.
ElboEstimate elbo_double_mc(const DenoiserPolicy& policy, const MaskedSequence& y, int n_samples,
                            RngStream& rng, double t_min = kDefaultTimeFloor);

// Semi-deterministic estimate: deterministic quadrature over time, Monte
// Carlo over corruptions. N * K model evaluations.
ElboEstimate elbo_sdmc(const DenoiserPolicy& policy, const MaskedSequence& y,
                       const QuadratureRule& rule, int k_draws, RngStream& rng);

// One forward pass on the fully-masked completion; a biased single-shot
// surrogate kept as a baseline. Optionally re-noises the prompt first.
struct MeanFieldOptions {
  bool perturb_prompt = false;
  double perturb_prob = 0.15;
};
ElboEstimate elbo_meanfield_onestep(const DenoiserPolicy& policy, const MaskedSequence& y,
                                    MeanFieldOptions opts, RngStream& rng);

// Quadrature applied to the exact inner expectation (the K -> infinity limit
// of the semi-deterministic estimate); used by bias studies.
double quadrature_of_exact_integrand(const ExactIntegrand& g, const QuadratureRule& rule);

}  // namespace gdpo
