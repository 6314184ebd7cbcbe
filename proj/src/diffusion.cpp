#include "gdpo/diffusion.hpp"

#include <stdexcept>

#include "gdpo/policy.hpp"

namespace gdpo {

Vocabulary Vocabulary::with_size(int v) {
  if (v < 2) throw std::invalid_argument("Vocabulary: size must be >= 2");
  return Vocabulary{.size = v, .mask_id = v};
}

namespace {

void require_time(double t) {
  if (!(t > 0.0 && t <= 1.0)) throw std::invalid_argument("time must lie in (0, 1]");
}

}  // namespace

MaskedSequence forward_mask(const Vocabulary& vocab, const MaskedSequence& y0, double t,
                            RngStream& rng) {
  require_time(t);
  for (int i = y0.prompt_len; i < y0.length(); ++i) {
    if (vocab.is_mask(y0.tokens[i]))
      throw std::invalid_argument("forward_mask: completion already contains masks");
  }
  MaskedSequence out = y0;
  for (int i = y0.prompt_len; i < y0.length(); ++i) {
    if (rng.bernoulli(t)) out.tokens[i] = vocab.mask_id;
  }
  return out;
}

double forward_marginal_prob(const Vocabulary& vocab, const MaskedSequence& y_t,
                             const MaskedSequence& y0, double t) {
  require_time(t);
  if (y_t.length() != y0.length() || y_t.prompt_len != y0.prompt_len) return 0.0;
  for (int i = 0; i < y0.prompt_len; ++i) {
    if (y_t.tokens[i] != y0.tokens[i]) return 0.0;
  }
  double prob = 1.0;
  for (int i = y0.prompt_len; i < y0.length(); ++i) {
    if (vocab.is_mask(y_t.tokens[i])) {
      prob *= t;
    } else if (y_t.tokens[i] == y0.tokens[i]) {
      prob *= 1.0 - t;
    } else {
      return 0.0;
    }
  }
  return prob;
}

MaskedSequence reverse_step(const MaskedSequence& y_t, double t, double s,
                            const DenoiserPolicy& policy, RngStream& rng) {
  require_time(t);
  if (!(s > 0.0 && s < t)) throw std::invalid_argument("reverse_step: requires 0 < s < t");

  const Vocabulary& vocab = policy.vocab();
  bool any_masked = false;
  for (int i = y_t.prompt_len; i < y_t.length(); ++i) {
    if (vocab.is_mask(y_t.tokens[i])) {
      any_masked = true;
      break;
    }
  }
  if (!any_masked) return y_t;

  MaskedSequence out = y_t;
  const auto predictions = policy.predict_masked(y_t);
  const double stay = s / t;
  for (const auto& [pos, dist] : predictions) {
    if (rng.bernoulli(stay)) continue;
    out.tokens[pos] = sample_categorical(dist, rng);
  }
  return out;
}

SampleResult sample_completion(const MaskedSequence& prompt, const DenoiserPolicy& policy,
                               int steps, RngStream& rng, SampleOptions opts) {
  if (steps < 1) throw std::invalid_argument("sample_completion: steps must be >= 1");
  const Vocabulary& vocab = policy.vocab();

  MaskedSequence y = prompt;
  for (int i = y.prompt_len; i < y.length(); ++i) y.tokens[i] = vocab.mask_id;

  const uint64_t evals_before = policy.eval_count();

  if (!opts.greedy) {
    for (int j = 0; j + 1 < steps; ++j) {
      const double t = 1.0 - static_cast<double>(j) / steps;
      const double s = 1.0 - static_cast<double>(j + 1) / steps;
      y = reverse_step(y, t, s, policy, rng);
    }
  }
  // Terminal fill: whatever is still masked gets decoded in one pass.
  bool any_masked = false;
  for (int i = y.prompt_len; i < y.length(); ++i) {
    if (vocab.is_mask(y.tokens[i])) {
      any_masked = true;
      break;
    }
  }
  if (any_masked) {
    const auto predictions = policy.predict_masked(y);
    for (const auto& [pos, dist] : predictions) {
      if (opts.greedy) {
        int best = 0;
        for (size_t k = 1; k < dist.size(); ++k) {
          if (dist[k] > dist[best]) best = static_cast<int>(k);
        }
        y.tokens[pos] = best;
      } else {
        y.tokens[pos] = sample_categorical(dist, rng);
      }
    }
  }
  return SampleResult{.sequence = std::move(y),
                      .n_model_evals = policy.eval_count() - evals_before};
}

std::vector<MaskPattern> enumerate_mask_patterns(int len) {
  if (len < 0 || len > kMaxEnumerateLen)
    throw std::invalid_argument("enumerate_mask_patterns: length out of range");
  std::vector<MaskPattern> out;
  out.reserve(size_t{1} << len);
  for (int c = 0; c <= len; ++c) {
    // lexicographically ordered c-combinations of {0..len-1}
    std::vector<int> idx(c);
    for (int i = 0; i < c; ++i) idx[i] = i;
    for (;;) {
      uint32_t bits = 0;
      for (int i : idx) bits |= (1u << i);
      out.push_back(MaskPattern{.bits = bits, .len = len});
      if (c == 0) break;
      int i = c - 1;
      while (i >= 0 && idx[i] == len - c + i) --i;
      if (i < 0) break;
      ++idx[i];
      for (int j = i + 1; j < c; ++j) idx[j] = idx[j - 1] + 1;
    }
  }
  return out;
}

MaskedSequence apply_pattern(const Vocabulary& vocab, const MaskedSequence& y0,
                             const MaskPattern& pattern) {
  if (pattern.len != y0.completion_len())
    throw std::invalid_argument("apply_pattern: length mismatch");
  MaskedSequence out = y0;
  for (int i = 0; i < pattern.len; ++i) {
    if (pattern.contains(i)) out.tokens[y0.prompt_len + i] = vocab.mask_id;
  }
  return out;
}

}  // namespace gdpo
