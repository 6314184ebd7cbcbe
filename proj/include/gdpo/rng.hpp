#pragma once

#include <cmath>
#include <cstdint>
#include <span>

namespace gdpo {

// Counter-based random stream: draw n is a pure hash of (key, n), so streams
// can be split arbitrarily and results do not depend on evaluation order.
class RngStream {
 public:
  explicit RngStream(uint64_t seed, uint64_t stream = 0)
      : key_(mix64(mix64(seed + kGolden) ^ mix64(stream + kStreamSalt))) {}

  // Derives an independent child stream. Children of distinct ids are
  // distinct; splitting does not advance this stream.
  RngStream split(uint64_t child) const {
    RngStream s(*this);
    s.key_ = mix64(key_ ^ mix64(child + kSplitSalt));
    s.n_ = 0;
    s.have_spare_ = false;
    return s;
  }

  uint64_t next_u64() { return mix64(key_ + (++n_) * kGolden); }

  // [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // (0, 1]
  double uniform_pos() { return 1.0 - uniform(); }

  // Uniform on (lo, hi]; used for time draws where 0 must be excluded.
  double uniform_open(double lo, double hi) { return lo + (hi - lo) * uniform_pos(); }

  // [0, n)
  uint32_t uniform_int(uint32_t n) {
    return static_cast<uint32_t>((static_cast<__uint128_t>(next_u64()) * n) >> 64);
  }

  bool bernoulli(double p) { return uniform() < p; }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = uniform_pos();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

 private:
  static constexpr uint64_t kGolden = 0x9E3779B97F4A7C15ull;
  static constexpr uint64_t kStreamSalt = 0xD1B54A32D192ED03ull;
  static constexpr uint64_t kSplitSalt = 0x8CB92BA72F3D8DD7ull;

  static uint64_t mix64(uint64_t z) {
    z ^= z >> 33;
    z *= 0xFF51AFD7ED558CCDull;
    z ^= z >> 33;
    z *= 0xC4CEB9FE1A85EC53ull;
    z ^= z >> 33;
    return z;
  }

  uint64_t key_;
  uint64_t n_ = 0;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// Samples an index from an (already normalized) probability vector.
inline int sample_categorical(std::span<const double> probs, RngStream& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size()) - 1;  // guards against rounding at acc ~ 1
}

}  // namespace gdpo
