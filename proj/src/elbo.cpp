#include "gdpo/elbo.hpp"

#include <cmath>
#include <stdexcept>

#include "gdpo/stats.hpp"

namespace gdpo {

double integrand_mc(const DenoiserPolicy& policy, const MaskedSequence& y, double t, int k_draws,
                    RngStream& rng) {
  if (!(t > 0.0 && t <= 1.0)) throw std::invalid_argument("integrand_mc: t must lie in (0, 1]");
  if (k_draws < 1) throw std::invalid_argument("integrand_mc: K must be >= 1");
  double sum = 0.0;
  for (int k = 0; k < k_draws; ++k) {
    const MaskedSequence y_t = forward_mask(policy.vocab(), y, t, rng);
    sum += policy.seq_log_prob(y_t, y) / t;
  }
  return sum / k_draws;
}

ExactIntegrand::ExactIntegrand(const DenoiserPolicy& policy, const MaskedSequence& y)
    : len_(y.completion_len()) {
  if (len_ < 1 || len_ > kMaxEnumerateLen)
    throw std::invalid_argument("ExactIntegrand: completion length out of range");
  card_sums_.assign(len_ + 1, 0.0);
  std::vector<double> comp(len_ + 1, 0.0);  // Kahan per cardinality
  for (const MaskPattern& pattern : enumerate_mask_patterns(len_)) {
    const int c = pattern.cardinality();
    if (c == 0) continue;
    const MaskedSequence y_s = apply_pattern(policy.vocab(), y, pattern);
    double a = 0.0;
    for (int i = 0; i < len_; ++i) {
      if (pattern.contains(i)) {
        const int pos = y.prompt_len + i;
        a += policy.log_prob(pos, y.tokens[pos], y_s);
      }
    }
    const double val = a - comp[c];
    const double t = card_sums_[c] + val;
    comp[c] = (t - card_sums_[c]) - val;
    card_sums_[c] = t;
  }
}

double ExactIntegrand::at(double t) const {
  // E[Z_t] = sum_c A_c t^(c-1) (1-t)^(L-c); evaluable on all of [0, 1].
  double sum = 0.0, comp = 0.0;
  for (int c = 1; c <= len_; ++c) {
    const double term =
        card_sums_[c] * std::pow(t, c - 1) * std::pow(1.0 - t, len_ - c);
    const double v = term - comp;
    const double s = sum + v;
    comp = (s - sum) - v;
    sum = s;
  }
  return sum;
}

double ExactIntegrand::integral() const {
  // integral of t^(c-1) (1-t)^(L-c) over [0,1] is Beta(c, L-c+1); the ratios
  // between consecutive c are small rationals, so build them by recurrence.
  double sum = 0.0, comp = 0.0;
  double beta = 1.0 / len_;  // Beta(1, L)
  for (int c = 1; c <= len_; ++c) {
    const double term = card_sums_[c] * beta;
    const double v = term - comp;
    const double s = sum + v;
    comp = (s - sum) - v;
    sum = s;
    if (c < len_) beta *= static_cast<double>(c) / static_cast<double>(len_ - c);
  }
  return sum;
}

double ExactIntegrand::clamped_mean(double t_min) const {
  if (!(t_min >= 0.0 && t_min < 1.0))
    throw std::invalid_argument("clamped_mean: t_min must lie in [0, 1)");
  if (t_min == 0.0) return integral();
  // integral over [0, t_min] of t^(c-1)(1-t)^(L-c) via the finite binomial
  // expansion of (1-t)^(L-c); exact up to rounding.
  double beta = 1.0 / len_;
  double sum = 0.0, comp = 0.0;
  for (int c = 1; c <= len_; ++c) {
    double head = 0.0;
    double binom = 1.0;
    for (int j = 0; j <= len_ - c; ++j) {
      if (j > 0) binom *= -static_cast<double>(len_ - c - j + 1) / j;
      head += binom * std::pow(t_min, c + j) / (c + j);
    }
    const double term = card_sums_[c] * (beta - head);
    const double v = term - comp;
    const double s = sum + v;
    comp = (s - sum) - v;
    sum = s;
    if (c < len_) beta *= static_cast<double>(c) / static_cast<double>(len_ - c);
  }
  return sum / (1.0 - t_min);
}

double integrand_exact(const DenoiserPolicy& policy, const MaskedSequence& y, double t) {
  return ExactIntegrand(policy, y).at(t);
}

ElboEstimate elbo_exact(const DenoiserPolicy& policy, const MaskedSequence& y) {
  ElboEstimate est;
  est.estimator = "exact";
  est.value = ExactIntegrand(policy, y).integral();
  est.n_model_evals = 0;  // oracle; not part of any sampling budget
  return est;
}

ElboEstimate elbo_double_mc(const DenoiserPolicy& policy, const MaskedSequence& y, int n_samples,
                            RngStream& rng, double t_min) {
  if (n_samples < 1) throw std::invalid_argument("elbo_double_mc: n_samples must be >= 1");
  std::vector<double> draws(n_samples);
  for (int j = 0; j < n_samples; ++j) {
    const double t = rng.uniform_open(t_min, 1.0);
    const MaskedSequence y_t = forward_mask(policy.vocab(), y, t, rng);
    draws[j] = policy.seq_log_prob(y_t, y) / t;
  }
  ElboEstimate est;
  est.estimator = "double_mc";
  est.value = mean(draws);
  est.n_model_evals = n_samples;
  if (n_samples >= 2) est.empirical_variance = sample_variance(draws) / n_samples;
  return est;
}

ElboEstimate elbo_sdmc(const DenoiserPolicy& policy, const MaskedSequence& y,
                       const QuadratureRule& rule, int k_draws, RngStream& rng) {
  if (k_draws < 1) throw std::invalid_argument("elbo_sdmc: K must be >= 1");
  ElboEstimate est;
  est.estimator = "sdmc";
  est.per_node.reserve(rule.size());
  double value = 0.0;
  double var = 0.0;
  bool have_var = k_draws >= 2;
  for (int n = 0; n < rule.size(); ++n) {
    const double t = rule.nodes[n];
    std::vector<double> draws(k_draws);
    for (int k = 0; k < k_draws; ++k) {
      const MaskedSequence y_t = forward_mask(policy.vocab(), y, t, rng);
      draws[k] = policy.seq_log_prob(y_t, y) / t;
    }
    const double inner = mean(draws);
    est.per_node.push_back({t, rule.weights[n], inner});
    value += rule.weights[n] * inner;
    if (have_var) var += rule.weights[n] * rule.weights[n] * sample_variance(draws) / k_draws;
  }
  est.value = value;
  est.n_model_evals = static_cast<long>(rule.size()) * k_draws;
  if (have_var) est.empirical_variance = var;
  return est;
}

ElboEstimate elbo_meanfield_onestep(const DenoiserPolicy& policy, const MaskedSequence& y,
                                    MeanFieldOptions opts, RngStream& rng) {
  const Vocabulary& vocab = policy.vocab();
  MaskedSequence ctx = y;
  for (int i = ctx.prompt_len; i < ctx.length(); ++i) ctx.tokens[i] = vocab.mask_id;
  if (opts.perturb_prompt) {
    for (int i = 0; i < ctx.prompt_len; ++i) {
      if (rng.bernoulli(opts.perturb_prob)) ctx.tokens[i] = vocab.mask_id;
    }
  }
  ElboEstimate est;
  est.estimator = "meanfield";
  // seq_log_prob scores masked completion positions only, so a perturbed
  // prompt changes the conditioning but never the scored set.
  est.value = policy.seq_log_prob(ctx, y);
  est.n_model_evals = 1;
  est.empirical_variance = 0.0;
  return est;
}

double quadrature_of_exact_integrand(const ExactIntegrand& g, const QuadratureRule& rule) {
  return integrate(rule, [&g](double t) { return g.at(t); });
}

}  // namespace gdpo
