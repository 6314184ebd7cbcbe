#include <doctest.h>

#include <cmath>
#include <set>

#include "gdpo/diffusion.hpp"
#include "gdpo/policy.hpp"

using namespace gdpo;

namespace {

MaskedSequence seq(std::vector<int> toks, int prompt_len = 0) {
  return MaskedSequence{std::move(toks), prompt_len};
}

}  // namespace

TEST_SUITE("diffusion") {

TEST_CASE("forward_mask limits") {
  const auto vocab = Vocabulary::with_size(3);
  RngStream rng(1);
  const auto y0 = seq({0, 1, 2});

  SUBCASE("t near zero leaves the sequence unchanged") {
    int changed = 0;
    for (int i = 0; i < 2000; ++i) {
      if (forward_mask(vocab, y0, 1e-9, rng) != y0) ++changed;
    }
    CHECK(changed == 0);
  }
  SUBCASE("t = 1 masks everything") {
    for (int i = 0; i < 50; ++i) {
      const auto y1 = forward_mask(vocab, y0, 1.0, rng);
      for (int tok : y1.tokens) CHECK(vocab.is_mask(tok));
    }
  }
  SUBCASE("prompt region is never masked") {
    const auto withp = seq({2, 1, 0, 2}, 2);
    for (int i = 0; i < 200; ++i) {
      const auto yt = forward_mask(vocab, withp, 0.9, rng);
      CHECK(yt.tokens[0] == 2);
      CHECK(yt.tokens[1] == 1);
    }
  }
  SUBCASE("rejects t outside (0,1]") {
    CHECK_THROWS_AS(forward_mask(vocab, y0, 0.0, rng), std::invalid_argument);
    CHECK_THROWS_AS(forward_mask(vocab, y0, 1.5, rng), std::invalid_argument);
    CHECK_THROWS_AS(forward_mask(vocab, y0, -0.2, rng), std::invalid_argument);
  }
  SUBCASE("rejects pre-masked completion") {
    auto bad = y0;
    bad.tokens[1] = vocab.mask_id;
    CHECK_THROWS_AS(forward_mask(vocab, bad, 0.5, rng), std::invalid_argument);
  }
}

TEST_CASE("forward_mask single-position frequency at t = 0.5") {
  // L = 2 completion: P(exactly position 0 masked) = 0.5 * 0.5 = 0.25.
  const auto vocab = Vocabulary::with_size(2);
  RngStream rng(7);
  const auto y0 = seq({0, 1});
  const int n = 100000;
  int hits = 0;
  for (int i = 0; i < n; ++i) {
    const auto yt = forward_mask(vocab, y0, 0.5, rng);
    if (vocab.is_mask(yt.tokens[0]) && !vocab.is_mask(yt.tokens[1])) ++hits;
  }
  const double p = 0.25;
  const double sigma = std::sqrt(p * (1 - p) * n);
  CHECK(std::abs(hits - p * n) < 4.0 * sigma);
}

TEST_CASE("masked count is binomial") {
  const auto vocab = Vocabulary::with_size(2);
  RngStream rng(11);
  const auto y0 = seq({0, 1, 0, 1, 0, 1});
  const double t = 0.3;
  const int n = 100000;
  const int len = y0.length();
  long total = 0;
  for (int i = 0; i < n; ++i) {
    const auto yt = forward_mask(vocab, y0, t, rng);
    for (int tok : yt.tokens) total += vocab.is_mask(tok);
  }
  const double expect = len * t;
  const double sigma = std::sqrt(len * t * (1 - t) / n);
  CHECK(std::abs(static_cast<double>(total) / n - expect) < 4.0 * sigma);
}

TEST_CASE("forward_marginal_prob") {
  const auto vocab = Vocabulary::with_size(3);
  const auto y0 = seq({0, 1});

  SUBCASE("identical sequences") {
    CHECK(forward_marginal_prob(vocab, y0, y0, 0.3) == doctest::Approx(0.49).epsilon(1e-12));
  }
  SUBCASE("fully masked") {
    const auto ym = seq({vocab.mask_id, vocab.mask_id});
    CHECK(forward_marginal_prob(vocab, ym, y0, 0.3) == doctest::Approx(0.09).epsilon(1e-12));
  }
  SUBCASE("inconsistent visible token") {
    const auto bad = seq({0, 2});
    CHECK(forward_marginal_prob(vocab, bad, y0, 0.3) == 0.0);
  }
  SUBCASE("sums to one over all patterns") {
    for (int len : {1, 3, 6, 10}) {
      std::vector<int> toks(len);
      for (int i = 0; i < len; ++i) toks[i] = i % vocab.size;
      const auto y = seq(std::move(toks));
      const double t = 0.37;
      double total = 0.0;
      for (const auto& pattern : enumerate_mask_patterns(len)) {
        total += forward_marginal_prob(vocab, apply_pattern(vocab, y, pattern), y, t);
      }
      CHECK(std::abs(total - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("enumerate_mask_patterns") {
  SUBCASE("L = 0 yields only the empty pattern") {
    const auto ps = enumerate_mask_patterns(0);
    REQUIRE(ps.size() == 1);
    CHECK(ps[0].bits == 0);
  }
  SUBCASE("L = 2 yields the four subsets in order") {
    const auto ps = enumerate_mask_patterns(2);
    REQUIRE(ps.size() == 4);
    CHECK(ps[0].bits == 0b00);
    CHECK(ps[1].bits == 0b01);
    CHECK(ps[2].bits == 0b10);
    CHECK(ps[3].bits == 0b11);
  }
  SUBCASE("L = 10 yields 1024 distinct patterns, cardinality ascending") {
    const auto ps = enumerate_mask_patterns(10);
    REQUIRE(ps.size() == 1024);
    std::set<uint32_t> uniq;
    int last_card = 0;
    for (const auto& p : ps) {
      uniq.insert(p.bits);
      CHECK(p.cardinality() >= last_card);
      last_card = p.cardinality();
    }
    CHECK(uniq.size() == 1024);
  }
  SUBCASE("guard rejects oversized L") {
    CHECK_THROWS_AS(enumerate_mask_patterns(21), std::invalid_argument);
  }
}

TEST_CASE("reverse_step") {
  const auto vocab = Vocabulary::with_size(2);
  TabularDenoiser uniform(vocab, 2);  // zero logits
  RngStream rng(3);

  SUBCASE("identity on fully visible input") {
    const auto y = seq({0, 1});
    CHECK(reverse_step(y, 0.8, 0.4, uniform, rng) == y);
  }
  SUBCASE("rejects s >= t") {
    const auto y = seq({vocab.mask_id, 1});
    CHECK_THROWS_AS(reverse_step(y, 0.5, 0.5, uniform, rng), std::invalid_argument);
    CHECK_THROWS_AS(reverse_step(y, 0.5, 0.7, uniform, rng), std::invalid_argument);
  }
  SUBCASE("s close to t keeps masks with high probability") {
    const auto y = seq({vocab.mask_id, vocab.mask_id});
    int unmasked = 0;
    for (int i = 0; i < 5000; ++i) {
      const auto ys = reverse_step(y, 0.5, 0.5 * (1.0 - 1e-7), uniform, rng);
      for (int tok : ys.tokens) unmasked += !vocab.is_mask(tok);
    }
    CHECK(unmasked == 0);
  }
  SUBCASE("never alters or masks a visible position") {
    const auto y = seq({0, vocab.mask_id, 1, vocab.mask_id});
    for (int i = 0; i < 500; ++i) {
      const auto ys = reverse_step(y, 0.9, 0.3, uniform, rng);
      CHECK(ys.tokens[0] == 0);
      CHECK(ys.tokens[2] == 1);
    }
  }
  SUBCASE("single masked slot transition frequencies") {
    // stay masked w.p. s/t = 1/2, otherwise uniform over V: each token 1/(2V).
    const auto y = seq({vocab.mask_id, 0});
    const int n = 100000;
    int stayed = 0;
    std::vector<int> filled(vocab.size, 0);
    for (int i = 0; i < n; ++i) {
      const auto ys = reverse_step(y, 0.6, 0.3, uniform, rng);
      if (vocab.is_mask(ys.tokens[0])) {
        ++stayed;
      } else {
        ++filled[ys.tokens[0]];
      }
    }
    auto freq_check = [n](int count, double p) {
      const double sigma = std::sqrt(p * (1 - p) * n);
      CHECK(std::abs(count - p * n) < 4.0 * sigma);
    };
    freq_check(stayed, 0.5);
    for (int k = 0; k < vocab.size; ++k) freq_check(filled[k], 0.5 / vocab.size);
  }
}

TEST_CASE("sample_completion") {
  const auto vocab = Vocabulary::with_size(2);
  TabularDenoiser uniform(vocab, 2);
  RngStream rng(5);
  const auto prompt = seq({vocab.mask_id, vocab.mask_id});

  SUBCASE("output is fully decoded") {
    for (int steps : {1, 2, 4, 9}) {
      const auto res = sample_completion(prompt, uniform, steps, rng);
      for (int tok : res.sequence.tokens) CHECK(vocab.is_real(tok));
    }
  }
  SUBCASE("T = 1 costs exactly one pass") {
    uniform.reset_eval_count();
    const auto res = sample_completion(prompt, uniform, 1, rng);
    CHECK(res.n_model_evals == 1);
    CHECK(uniform.eval_count() == 1);
  }
  SUBCASE("deterministic one-hot policy ignores steps and rng") {
    TabularDenoiser peaked(vocab, 2);
    for (size_t r = 0; r < peaked.params().size() / vocab.size; ++r) {
      peaked.row(r)[1] = 40.0;  // always predict token 1
    }
    for (int steps : {1, 3, 7}) {
      RngStream r1(99 + steps);
      const auto res = sample_completion(prompt, peaked, steps, r1);
      CHECK(res.sequence == seq({1, 1}));
    }
  }
  SUBCASE("uniform policy yields uniform completions") {
    const int n = 100000;
    std::vector<int> counts(4, 0);
    for (int i = 0; i < n; ++i) {
      const auto res = sample_completion(prompt, uniform, 4, rng);
      ++counts[res.sequence.tokens[0] * 2 + res.sequence.tokens[1]];
    }
    const double p = 0.25;
    const double sigma = std::sqrt(p * (1 - p) * n);
    for (int k = 0; k < 4; ++k) CHECK(std::abs(counts[k] - p * n) < 4.0 * sigma);
  }
}

}  // TEST_SUITE
