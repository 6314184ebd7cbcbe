#include "gdpo/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace gdpo {

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  double mx = -std::numeric_limits<double>::infinity();
  for (double z : logits) mx = std::max(mx, z);
  double sum = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    sum += out[i];
  }
  for (double& p : out) p /= sum;
  return out;
}

std::vector<double> log_softmax(std::span<const double> logits) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double z : logits) mx = std::max(mx, z);
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - mx);
  const double lse = mx + std::log(sum);
  std::vector<double> out(logits.size());
  for (size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

void DenoiserPolicy::require_masked_position(int pos, const MaskedSequence& y_t) const {
  if (pos < y_t.prompt_len || pos >= y_t.length())
    throw std::invalid_argument("policy: position outside completion region");
  if (!vocab_.is_mask(y_t.tokens[pos]))
    throw std::invalid_argument("policy: position is not masked");
}

double DenoiserPolicy::log_prob(int pos, int target, const MaskedSequence& y_t) const {
  require_masked_position(pos, y_t);
  if (!vocab_.is_real(target)) throw std::invalid_argument("policy: target must be a real token");
  const auto logits = logits_at(pos, y_t);
  return log_softmax(logits)[target];
}

std::vector<double> DenoiserPolicy::predictive(int pos, const MaskedSequence& y_t,
                                               bool greedy) const {
  require_masked_position(pos, y_t);
  const auto logits = logits_at(pos, y_t);
  if (greedy) {
    std::vector<double> out(logits.size(), 0.0);
    size_t best = 0;
    for (size_t k = 1; k < logits.size(); ++k) {
      if (logits[k] > logits[best]) best = k;
    }
    out[best] = 1.0;
    return out;
  }
  return softmax(logits);
}

void DenoiserPolicy::log_prob_grad(int pos, int target, const MaskedSequence& y_t, double scale,
                                   std::span<double> grad) const {
  require_masked_position(pos, y_t);
  if (!vocab_.is_real(target)) throw std::invalid_argument("policy: target must be a real token");
  // d log softmax / d logits = one_hot(target) - softmax
  auto probs = softmax(logits_at(pos, y_t));
  std::vector<double> dlogits(probs.size());
  for (size_t k = 0; k < probs.size(); ++k) dlogits[k] = scale * (-probs[k]);
  dlogits[target] += scale;
  std::pair<int, std::vector<double>> one{pos, std::move(dlogits)};
  backprop_logits(y_t, std::span<const std::pair<int, std::vector<double>>>(&one, 1), grad);
}

double DenoiserPolicy::seq_log_prob(const MaskedSequence& y_t, const MaskedSequence& y0) const {
  count_eval();
  double sum = 0.0;
  for (int i = y_t.prompt_len; i < y_t.length(); ++i) {
    if (vocab_.is_mask(y_t.tokens[i])) sum += log_prob(i, y0.tokens[i], y_t);
  }
  return sum;
}

double DenoiserPolicy::seq_log_prob_grad(const MaskedSequence& y_t, const MaskedSequence& y0,
                                         double scale, std::span<double> grad) const {
  count_eval();
  double sum = 0.0;
  std::vector<std::pair<int, std::vector<double>>> dlogits;
  for (int i = y_t.prompt_len; i < y_t.length(); ++i) {
    if (!vocab_.is_mask(y_t.tokens[i])) continue;
    const int target = y0.tokens[i];
    if (!vocab_.is_real(target))
      throw std::invalid_argument("seq_log_prob_grad: clean sequence has a non-real token");
    const auto logits = logits_at(i, y_t);
    const auto logp = log_softmax(logits);
    sum += logp[target];
    std::vector<double> d(logp.size());
    for (size_t k = 0; k < logp.size(); ++k) d[k] = scale * (-std::exp(logp[k]));
    d[target] += scale;
    dlogits.emplace_back(i, std::move(d));
  }
  if (!dlogits.empty()) backprop_logits(y_t, dlogits, grad);
  return sum;
}

std::vector<std::pair<int, std::vector<double>>> DenoiserPolicy::predict_masked(
    const MaskedSequence& y_t) const {
  count_eval();
  std::vector<std::pair<int, std::vector<double>>> out;
  for (int i = y_t.prompt_len; i < y_t.length(); ++i) {
    if (vocab_.is_mask(y_t.tokens[i])) out.emplace_back(i, predictive(i, y_t));
  }
  return out;
}

double DenoiserPolicy::seq_kl_grad(const DenoiserPolicy& ref, const MaskedSequence& y_t,
                                   double scale, std::span<double> grad) const {
  count_eval();
  ref.count_eval();
  double total = 0.0;
  std::vector<std::pair<int, std::vector<double>>> dlogits;
  for (int i = y_t.prompt_len; i < y_t.length(); ++i) {
    if (!vocab_.is_mask(y_t.tokens[i])) continue;
    const auto logp = log_softmax(logits_at(i, y_t));
    const auto logq = log_softmax(ref.logits_at(i, y_t));
    double kl = 0.0;
    for (size_t k = 0; k < logp.size(); ++k) kl += std::exp(logp[k]) * (logp[k] - logq[k]);
    total += kl;
    if (!grad.empty()) {
      // d KL / d logits_a = p_a * ((log p_a - log q_a) - KL)
      std::vector<double> d(logp.size());
      for (size_t k = 0; k < logp.size(); ++k)
        d[k] = scale * std::exp(logp[k]) * ((logp[k] - logq[k]) - kl);
      dlogits.emplace_back(i, std::move(d));
    }
  }
  if (!dlogits.empty()) backprop_logits(y_t, dlogits, grad);
  return total;
}

double DenoiserPolicy::seq_kl(const DenoiserPolicy& ref, const MaskedSequence& y_t) const {
  return seq_kl_grad(ref, y_t, 0.0, {});
}

double kl_per_position(const DenoiserPolicy& policy_a, const DenoiserPolicy& policy_b, int pos,
                       const MaskedSequence& y_t) {
  const auto p = policy_a.predictive(pos, y_t);
  const auto q = policy_b.predictive(pos, y_t);
  double kl = 0.0;
  for (size_t k = 0; k < p.size(); ++k) {
    if (p[k] == 0.0) continue;
    if (q[k] == 0.0) return std::numeric_limits<double>::infinity();
    kl += p[k] * std::log(p[k] / q[k]);
  }
  return std::max(kl, 0.0);
}

// --- TableLayout -------------------------------------------------------------

size_t TableLayout::KeyHash::operator()(const Key& k) const {
  uint64_t h = 0x9E3779B97F4A7C15ull;
  auto mix = [&h](uint64_t v) {
    h ^= v + 0x9E3779B97F4A7C15ull + (h << 6) + (h >> 2);
  };
  mix(static_cast<uint64_t>(static_cast<uint32_t>(k.prompt_id)));
  mix(k.mask_bits);
  mix(k.visible);
  mix(static_cast<uint64_t>(static_cast<uint16_t>(k.pos)));
  return static_cast<size_t>(h);
}

size_t TableLayout::PromptHash::operator()(const std::vector<int>& v) const {
  uint64_t h = 1469598103934665603ull;
  for (int x : v) {
    h ^= static_cast<uint64_t>(static_cast<uint32_t>(x));
    h *= 1099511628211ull;
  }
  return static_cast<size_t>(h);
}

namespace {
constexpr int kTabularMaxLen = 16;   // 4 bits per completion slot in the key
constexpr int kTabularMaxVocab = 15; // token + mask sentinel fit in a nibble
constexpr size_t kTabularMaxRows = 4u << 20;
}  // namespace

std::shared_ptr<const TableLayout> TableLayout::build(const Vocabulary& vocab, int completion_len,
                                                      std::vector<std::vector<int>> prompts) {
  if (completion_len < 1 || completion_len > kTabularMaxLen)
    throw std::invalid_argument("TableLayout: completion length out of range");
  if (vocab.size > kTabularMaxVocab)
    throw std::invalid_argument("TableLayout: vocabulary too large for tabular backend");
  if (prompts.empty()) prompts.push_back({});

  auto layout = std::make_shared<TableLayout>();
  layout->vocab_ = vocab;
  layout->completion_len_ = completion_len;
  layout->prompt_len_ = static_cast<int>(prompts.front().size());
  for (const auto& p : prompts) {
    if (static_cast<int>(p.size()) != layout->prompt_len_)
      throw std::invalid_argument("TableLayout: prompts must share one length");
    for (int tok : p) {
      if (!vocab.is_real(tok))
        throw std::invalid_argument("TableLayout: prompt tokens must be real");
    }
  }
  layout->prompts_ = std::move(prompts);
  for (size_t i = 0; i < layout->prompts_.size(); ++i)
    layout->prompt_index_.emplace(layout->prompts_[i], static_cast<int>(i));
  if (layout->prompt_index_.size() != layout->prompts_.size())
    throw std::invalid_argument("TableLayout: duplicate prompts");

  const int L = completion_len;
  const int V = vocab.size;
  size_t row = 0;
  for (int prompt_id = 0; prompt_id < static_cast<int>(layout->prompts_.size()); ++prompt_id) {
    for (uint32_t bits = 1; bits < (1u << L); ++bits) {
      // visible slots take any real token; masked slots carry the 0xF nibble
      std::vector<int> visible_slots;
      for (int i = 0; i < L; ++i) {
        if (!((bits >> i) & 1u)) visible_slots.push_back(i);
      }
      const int n_vis = static_cast<int>(visible_slots.size());
      std::vector<int> assign(n_vis, 0);
      for (;;) {
        uint64_t packed = 0;
        for (int i = 0; i < L; ++i) packed |= (uint64_t{0xF} << (4 * i));
        for (int vi = 0; vi < n_vis; ++vi) {
          const int slot = visible_slots[vi];
          packed &= ~(uint64_t{0xF} << (4 * slot));
          packed |= (static_cast<uint64_t>(assign[vi]) << (4 * slot));
        }
        for (int i = 0; i < L; ++i) {
          if ((bits >> i) & 1u) {
            Key key{prompt_id, bits, packed, static_cast<int16_t>(i)};
            layout->rows_.emplace(key, row++);
            if (row > kTabularMaxRows)
              throw std::invalid_argument("TableLayout: context space too large");
          }
        }
        int vi = n_vis - 1;
        while (vi >= 0 && assign[vi] == V - 1) {
          assign[vi] = 0;
          --vi;
        }
        if (vi < 0) break;
        ++assign[vi];
      }
    }
  }
  layout->n_rows_ = row + 1;  // trailing default row
  return layout;
}

TableLayout::Key TableLayout::make_key(const MaskedSequence& y_t, int pos) const {
  Key key{};
  std::vector<int> prompt(y_t.tokens.begin(), y_t.tokens.begin() + y_t.prompt_len);
  const auto it = prompt_index_.find(prompt);
  key.prompt_id = it == prompt_index_.end() ? -1 : it->second;
  key.mask_bits = 0;
  key.visible = 0;
  for (int i = 0; i < completion_len_; ++i) {
    const int tok = y_t.tokens[y_t.prompt_len + i];
    if (vocab_.is_mask(tok)) {
      key.mask_bits |= (1u << i);
      key.visible |= (uint64_t{0xF} << (4 * i));
    } else {
      key.visible |= (static_cast<uint64_t>(tok) << (4 * i));
    }
  }
  key.pos = static_cast<int16_t>(pos - y_t.prompt_len);
  return key;
}

size_t TableLayout::row_of(const MaskedSequence& y_t, int pos) const {
  if (y_t.prompt_len != prompt_len_ || y_t.completion_len() != completion_len_)
    return default_row();
  const Key key = make_key(y_t, pos);
  if (key.prompt_id < 0) return default_row();
  const auto it = rows_.find(key);
  return it == rows_.end() ? default_row() : it->second;
}

// --- TabularDenoiser ---------------------------------------------------------

TabularDenoiser::TabularDenoiser(const Vocabulary& vocab, int completion_len,
                                 std::vector<std::vector<int>> prompts)
    : DenoiserPolicy(vocab, 0),
      layout_(TableLayout::build(vocab, completion_len, std::move(prompts))) {
  seq_len_ = layout_->seq_len();
  theta_.assign(layout_->n_rows() * vocab.size, 0.0);
  slices_ = {{"logit_table", 0, theta_.size()}};
}

TabularDenoiser TabularDenoiser::random(const Vocabulary& vocab, int completion_len, double sigma,
                                        RngStream& rng, std::vector<std::vector<int>> prompts) {
  TabularDenoiser policy(vocab, completion_len, std::move(prompts));
  for (double& v : policy.theta_) v = sigma * rng.normal();
  return policy;
}

std::vector<double> TabularDenoiser::logits_at(int pos, const MaskedSequence& y_t) const {
  const size_t row = layout_->row_of(y_t, pos);
  const size_t off = row * vocab_.size;
  return std::vector<double>(theta_.begin() + off, theta_.begin() + off + vocab_.size);
}

std::span<double> TabularDenoiser::row(size_t idx) {
  return {theta_.data() + idx * vocab_.size, static_cast<size_t>(vocab_.size)};
}

void TabularDenoiser::backprop_logits(
    const MaskedSequence& y_t, std::span<const std::pair<int, std::vector<double>>> dlogits,
    std::span<double> grad) const {
  for (const auto& [pos, d] : dlogits) {
    const size_t off = layout_->row_of(y_t, pos) * vocab_.size;
    for (int k = 0; k < vocab_.size; ++k) grad[off + k] += d[k];
  }
}

std::unique_ptr<DenoiserPolicy> TabularDenoiser::clone() const {
  return std::unique_ptr<DenoiserPolicy>(new TabularDenoiser(*this));
}

// --- TinyNeuralDenoiser ------------------------------------------------------

TinyNeuralDenoiser::TinyNeuralDenoiser(const Vocabulary& vocab, int seq_len, int embed_dim,
                                       int hidden_dim, double init_sigma, RngStream& rng)
    : DenoiserPolicy(vocab, seq_len), embed_(embed_dim), hidden_(hidden_dim) {
  if (seq_len < 1 || embed_dim < 1 || hidden_dim < 1)
    throw std::invalid_argument("TinyNeuralDenoiser: bad dimensions");
  const size_t v1 = static_cast<size_t>(vocab.size) + 1;
  const size_t sizes[] = {
      v1 * embed_,                                    // tok_emb (mask row last)
      static_cast<size_t>(seq_len) * embed_,          // pos_emb
      static_cast<size_t>(hidden_) * embed_,          // w1
      static_cast<size_t>(hidden_),                   // b1
      static_cast<size_t>(vocab.size) * hidden_,      // w2
      static_cast<size_t>(vocab.size),                // b2
  };
  const char* names[] = {"tok_emb", "pos_emb", "w1", "b1", "w2", "b2"};
  size_t off = 0;
  offsets_.clear();
  for (int i = 0; i < 6; ++i) {
    offsets_.push_back(off);
    slices_.push_back({names[i], off, sizes[i]});
    off += sizes[i];
  }
  offsets_.push_back(off);
  theta_.resize(off);
  for (double& v : theta_) v = init_sigma * rng.normal();
}

std::span<const double> TinyNeuralDenoiser::slice(int which) const {
  return {theta_.data() + offsets_[which], offsets_[which + 1] - offsets_[which]};
}

std::span<double> TinyNeuralDenoiser::slice_mut(std::span<double> buf, int which) const {
  return buf.subspan(offsets_[which], offsets_[which + 1] - offsets_[which]);
}

TinyNeuralDenoiser::Forward TinyNeuralDenoiser::forward_at(int pos,
                                                           const MaskedSequence& y_t) const {
  const auto tok_emb = slice(0);
  const auto pos_emb = slice(1);
  const auto w1 = slice(2);
  const auto b1 = slice(3);

  Forward f;
  f.ctx.assign(embed_, 0.0);
  for (int j = 0; j < y_t.length(); ++j) {
    const int tok = y_t.tokens[j];
    const int emb_row = vocab_.is_mask(tok) ? vocab_.size : tok;
    for (int d = 0; d < embed_; ++d) f.ctx[d] += tok_emb[emb_row * embed_ + d];
  }
  for (int d = 0; d < embed_; ++d) f.ctx[d] += pos_emb[pos * embed_ + d];

  f.hidden.assign(hidden_, 0.0);
  for (int h = 0; h < hidden_; ++h) {
    double z = b1[h];
    for (int d = 0; d < embed_; ++d) z += w1[h * embed_ + d] * f.ctx[d];
    f.hidden[h] = std::tanh(z);
  }
  return f;
}

std::vector<double> TinyNeuralDenoiser::logits_at(int pos, const MaskedSequence& y_t) const {
  const auto w2 = slice(4);
  const auto b2 = slice(5);
  const Forward f = forward_at(pos, y_t);
  std::vector<double> logits(vocab_.size);
  for (int k = 0; k < vocab_.size; ++k) {
    double z = b2[k];
    for (int h = 0; h < hidden_; ++h) z += w2[k * hidden_ + h] * f.hidden[h];
    logits[k] = z;
  }
  return logits;
}

void TinyNeuralDenoiser::backprop_logits(
    const MaskedSequence& y_t, std::span<const std::pair<int, std::vector<double>>> dlogits,
    std::span<double> grad) const {
  const auto w1 = slice(2);
  const auto w2 = slice(4);
  auto g_tok = slice_mut(grad, 0);
  auto g_pos = slice_mut(grad, 1);
  auto g_w1 = slice_mut(grad, 2);
  auto g_b1 = slice_mut(grad, 3);
  auto g_w2 = slice_mut(grad, 4);
  auto g_b2 = slice_mut(grad, 5);

  std::vector<double> dh(hidden_), dz(hidden_), dctx(embed_);
  for (const auto& [pos, dl] : dlogits) {
    const Forward f = forward_at(pos, y_t);
    for (int k = 0; k < vocab_.size; ++k) {
      g_b2[k] += dl[k];
      for (int h = 0; h < hidden_; ++h) g_w2[k * hidden_ + h] += dl[k] * f.hidden[h];
    }
    std::fill(dh.begin(), dh.end(), 0.0);
    for (int k = 0; k < vocab_.size; ++k) {
      for (int h = 0; h < hidden_; ++h) dh[h] += dl[k] * w2[k * hidden_ + h];
    }
    for (int h = 0; h < hidden_; ++h) dz[h] = dh[h] * (1.0 - f.hidden[h] * f.hidden[h]);
    std::fill(dctx.begin(), dctx.end(), 0.0);
    for (int h = 0; h < hidden_; ++h) {
      g_b1[h] += dz[h];
      for (int d = 0; d < embed_; ++d) {
        g_w1[h * embed_ + d] += dz[h] * f.ctx[d];
        dctx[d] += dz[h] * w1[h * embed_ + d];
      }
    }
    for (int j = 0; j < y_t.length(); ++j) {
      const int tok = y_t.tokens[j];
      const int emb_row = vocab_.is_mask(tok) ? vocab_.size : tok;
      for (int d = 0; d < embed_; ++d) g_tok[emb_row * embed_ + d] += dctx[d];
    }
    for (int d = 0; d < embed_; ++d) g_pos[pos * embed_ + d] += dctx[d];
  }
}

std::unique_ptr<DenoiserPolicy> TinyNeuralDenoiser::clone() const {
  return std::unique_ptr<DenoiserPolicy>(new TinyNeuralDenoiser(*this));
}

}  // namespace gdpo
