#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "gdpo/diffusion.hpp"

namespace gdpo {

struct ParamSlice {
  std::string name;
  size_t offset = 0;
  size_t size = 0;
};

// Per-position categorical denoiser pi(token | corrupted sequence, prompt)
// with exact log-probabilities and analytic parameter gradients.
//
// Evaluation-budget accounting: one "model evaluation" is one forward pass on
// one corrupted context. The batch entry points (seq_log_prob,
// seq_log_prob_grad, predict_masked, seq_kl_grad) each count one pass; the
// per-position queries (log_prob, predictive, logits_at) are free and exist
// for oracles and tests.
class DenoiserPolicy {
 public:
  virtual ~DenoiserPolicy() = default;

  const Vocabulary& vocab() const { return vocab_; }
  int seq_len() const { return seq_len_; }

  // Raw logits of the predictive distribution at a masked position.
  virtual std::vector<double> logits_at(int pos, const MaskedSequence& y_t) const = 0;

  // log pi(target | y_t) at a masked completion position; always <= 0.
  double log_prob(int pos, int target, const MaskedSequence& y_t) const;

  // Normalized predictive distribution; greedy = argmax one-hot variant for
  // deterministic tests.
  std::vector<double> predictive(int pos, const MaskedSequence& y_t, bool greedy = false) const;

  // d log pi(target | y_t) / d theta, scaled by `scale`, accumulated into
  // grad (size = num_params()).
  void log_prob_grad(int pos, int target, const MaskedSequence& y_t, double scale,
                     std::span<double> grad) const;

  // --- batch entry points (each counts one model evaluation) ---

  // Sum over masked completion positions of log pi(y0^i | y_t).
  double seq_log_prob(const MaskedSequence& y_t, const MaskedSequence& y0) const;

  // Same sum; also accumulates scale * d(sum)/d theta into grad.
  double seq_log_prob_grad(const MaskedSequence& y_t, const MaskedSequence& y0, double scale,
                           std::span<double> grad) const;

  // Predictive distribution at every masked completion position.
  std::vector<std::pair<int, std::vector<double>>> predict_masked(const MaskedSequence& y_t) const;

  // Sum over masked completion positions of KL(this || ref) between
  // predictives; optionally accumulates scale * d(sum)/d theta into grad.
  // Counts one evaluation on *this and one on ref.
  double seq_kl_grad(const DenoiserPolicy& ref, const MaskedSequence& y_t, double scale,
                     std::span<double> grad) const;
  double seq_kl(const DenoiserPolicy& ref, const MaskedSequence& y_t) const;

  // --- parameters ---
  std::vector<double>& params() { return theta_; }
  const std::vector<double>& params() const { return theta_; }
  size_t num_params() const { return theta_.size(); }
  const std::vector<ParamSlice>& slices() const { return slices_; }

  virtual std::unique_ptr<DenoiserPolicy> clone() const = 0;
  virtual std::string backend_name() const = 0;

  uint64_t eval_count() const { return evals_.load(std::memory_order_relaxed); }
  void reset_eval_count() { evals_.store(0, std::memory_order_relaxed); }

 protected:
  DenoiserPolicy(Vocabulary vocab, int seq_len) : vocab_(vocab), seq_len_(seq_len) {}
  DenoiserPolicy(const DenoiserPolicy& o)
      : vocab_(o.vocab_), seq_len_(o.seq_len_), theta_(o.theta_), slices_(o.slices_) {}

  // Backpropagates per-position logit cotangents through the model.
  virtual void backprop_logits(const MaskedSequence& y_t,
                               std::span<const std::pair<int, std::vector<double>>> dlogits,
                               std::span<double> grad) const = 0;

  void require_masked_position(int pos, const MaskedSequence& y_t) const;
  void count_eval() const { evals_.fetch_add(1, std::memory_order_relaxed); }

  Vocabulary vocab_;
  int seq_len_ = 0;
  std::vector<double> theta_;
  std::vector<ParamSlice> slices_;

 private:
  mutable std::atomic<uint64_t> evals_{0};
};

// Exact categorical KL sum_k p_k log(p_k / q_k); returns +inf if q has a zero
// where p does not (cannot happen for softmax-backed rows, guarded anyway).
double kl_per_position(const DenoiserPolicy& policy_a, const DenoiserPolicy& policy_b, int pos,
                       const MaskedSequence& y_t);

// --- tabular backend -------------------------------------------------------

// Context key: (prompt id, completion mask pattern, visible completion
// tokens, queried position). The full reachable table for a declared prompt
// set is enumerated up front so theta has a fixed flat layout; contexts
// outside the table fall back to a trailing default row.
class TableLayout {
 public:
  static std::shared_ptr<const TableLayout> build(const Vocabulary& vocab, int completion_len,
                                                  std::vector<std::vector<int>> prompts);

  size_t n_rows() const { return n_rows_; }           // includes the default row
  size_t default_row() const { return n_rows_ - 1; }
  const Vocabulary& vocab() const { return vocab_; }
  int completion_len() const { return completion_len_; }
  int prompt_len() const { return prompt_len_; }
  int seq_len() const { return prompt_len_ + completion_len_; }

  // Row index for (y_t, pos); default row if the context was not enumerated.
  size_t row_of(const MaskedSequence& y_t, int pos) const;

 private:
  struct Key {
    int32_t prompt_id;
    uint32_t mask_bits;
    uint64_t visible;
    int16_t pos;
    bool operator==(const Key&) const = default;
  };
  struct KeyHash {
    size_t operator()(const Key& k) const;
  };
  struct PromptHash {
    size_t operator()(const std::vector<int>& v) const;
  };

  Key make_key(const MaskedSequence& y_t, int pos) const;

  Vocabulary vocab_;
  int completion_len_ = 0;
  int prompt_len_ = 0;
  std::vector<std::vector<int>> prompts_;
  std::unordered_map<std::vector<int>, int, PromptHash> prompt_index_;
  std::unordered_map<Key, size_t, KeyHash> rows_;
  size_t n_rows_ = 0;
};

class TabularDenoiser : public DenoiserPolicy {
 public:
  // All-zero logits = exactly the uniform policy.
  TabularDenoiser(const Vocabulary& vocab, int completion_len,
                  std::vector<std::vector<int>> prompts = {{}});

  // Gaussian logits with the given scale; the workhorse for randomized
  // estimator studies.
  static TabularDenoiser random(const Vocabulary& vocab, int completion_len, double sigma,
                                RngStream& rng, std::vector<std::vector<int>> prompts = {{}});

  std::vector<double> logits_at(int pos, const MaskedSequence& y_t) const override;
  std::unique_ptr<DenoiserPolicy> clone() const override;
  std::string backend_name() const override { return "tabular"; }

  // Direct row access for constructing hand-crafted policies in tests.
  size_t row_index(const MaskedSequence& y_t, int pos) const { return layout_->row_of(y_t, pos); }
  std::span<double> row(size_t idx);

 protected:
  void backprop_logits(const MaskedSequence& y_t,
                       std::span<const std::pair<int, std::vector<double>>> dlogits,
                       std::span<double> grad) const override;

 private:
  std::shared_ptr<const TableLayout> layout_;
};

// --- tiny neural backend ----------------------------------------------------

// One-hidden-layer scorer: the context for position i is the sum of the token
// embeddings of every slot (masked slots use the mask row) plus the position
// embedding of i; order information enters only through that position
// embedding. Deterministic forward pass, analytic backprop.
class TinyNeuralDenoiser : public DenoiserPolicy {
 public:
  TinyNeuralDenoiser(const Vocabulary& vocab, int seq_len, int embed_dim, int hidden_dim,
                     double init_sigma, RngStream& rng);

  std::vector<double> logits_at(int pos, const MaskedSequence& y_t) const override;
  std::unique_ptr<DenoiserPolicy> clone() const override;
  std::string backend_name() const override { return "neural"; }

  int embed_dim() const { return embed_; }
  int hidden_dim() const { return hidden_; }

 protected:
  void backprop_logits(const MaskedSequence& y_t,
                       std::span<const std::pair<int, std::vector<double>>> dlogits,
                       std::span<double> grad) const override;

 private:
  struct Forward {
    std::vector<double> ctx;     // embed
    std::vector<double> hidden;  // tanh activations
  };
  Forward forward_at(int pos, const MaskedSequence& y_t) const;

  std::span<const double> slice(int which) const;
  std::span<double> slice_mut(std::span<double> buf, int which) const;

  int embed_ = 0;
  int hidden_ = 0;
  // slice order: tok_emb (V+1 x d), pos_emb (L x d), w1 (H x d), b1 (H),
  // w2 (V x H), b2 (V)
  std::vector<size_t> offsets_;
};

// Stable log-softmax / softmax over a logits row.
std::vector<double> softmax(std::span<const double> logits);
std::vector<double> log_softmax(std::span<const double> logits);

}  // namespace gdpo
