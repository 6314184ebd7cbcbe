#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gdpo/rng.hpp"

namespace gdpo {

// Token alphabet plus a reserved mask sentinel. Real tokens are 0..size-1;
// the mask id lives outside that range (we use `size` internally and -1 in
// serialized form).
struct Vocabulary {
  int size = 2;
  int mask_id = 2;

  static Vocabulary with_size(int v);

  bool is_real(int tok) const { return tok >= 0 && tok < size; }
  bool is_mask(int tok) const { return tok == mask_id; }
};

// Fixed-length token vector split into a prompt prefix (never masked) and a
// completion region. Carries token ids only; the vocabulary travels
// separately.
struct MaskedSequence {
  std::vector<int> tokens;
  int prompt_len = 0;

  int length() const { return static_cast<int>(tokens.size()); }
  int completion_len() const { return length() - prompt_len; }
  std::span<const int> prompt() const {
    return {tokens.data(), static_cast<size_t>(prompt_len)};
  }
  std::span<const int> completion() const {
    return {tokens.data() + prompt_len, static_cast<size_t>(completion_len())};
  }
  bool operator==(const MaskedSequence& o) const = default;
};

// Subset of completion positions, bit i = completion offset i masked.
struct MaskPattern {
  uint32_t bits = 0;
  int len = 0;

  int cardinality() const { return __builtin_popcount(bits); }
  bool contains(int i) const { return (bits >> i) & 1u; }
};

constexpr int kMaxPatternLen = 24;   // bitset representation bound
constexpr int kMaxEnumerateLen = 20; // 2^L enumeration guard

// --- forward / reverse process ------------------------------------------

// Independently replaces each completion token by the mask with probability
// t; the prompt is left untouched. Requires a mask-free completion and
// t in (0, 1].
MaskedSequence forward_mask(const Vocabulary& vocab, const MaskedSequence& y0, double t,
                            RngStream& rng);

// Probability that the forward process at time t maps y0's completion to
// y_t's. Returns 0 if y_t is inconsistent with y0 (disagreement on an
// unmasked slot or on the prompt).
double forward_marginal_prob(const Vocabulary& vocab, const MaskedSequence& y_t,
                             const MaskedSequence& y0, double t);

class DenoiserPolicy;

// One reverse transition from time t to time s < t: unmasked positions are
// copied, each masked position stays masked with probability s/t and is
// otherwise filled from the policy's predictive distribution.
MaskedSequence reverse_step(const MaskedSequence& y_t, double t, double s,
                            const DenoiserPolicy& policy, RngStream& rng);

struct SampleOptions {
  bool greedy = false;  // argmax fills instead of sampling
};

struct SampleResult {
  MaskedSequence sequence;
  uint64_t n_model_evals = 0;  // forward passes actually consumed
};

// Decodes a full completion by walking a uniform time grid from t = 1 down;
// any mask surviving the last step is filled directly from the policy so the
// output is always fully decoded. steps = 1 degenerates to a single-shot
// mean-field fill.
SampleResult sample_completion(const MaskedSequence& prompt, const DenoiserPolicy& policy,
                               int steps, RngStream& rng, SampleOptions opts = {});

// All 2^L mask patterns, ascending by (cardinality, lexicographic index
// order). L <= 20.
std::vector<MaskPattern> enumerate_mask_patterns(int len);

// Applies a pattern to the completion region of y0.
MaskedSequence apply_pattern(const Vocabulary& vocab, const MaskedSequence& y0,
                             const MaskPattern& pattern);

}  // namespace gdpo
