#pragma once

#include <cstdint>
#include <cmath>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace bb {

// Counter-based splittable random generator.
//
// A stream is a 64-bit key plus a draw counter; the i-th output is
// hash(key + i*gamma) with a splitmix64-style finalizer, so every draw is a
// pure function of (key, i). Child streams derive a fresh key from
// (parent key, label, index). Consumers each own their stream; there is no
// global state, and streams are reproducible across platforms because only
// integer arithmetic is involved in the draw path.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : key_(mix(seed + kGolden)) {}

  // Independent stream for (label, index). Does not consume draws from *this.
  Rng child(std::string_view label, std::uint64_t index = 0) const {
    std::uint64_t k = key_;
    for (unsigned char c : label) k = mix(k ^ (kGolden + c));
    k = mix(k ^ mix(index + kLeaf));
    return Rng(FromKey{}, k);
  }

  std::uint64_t next_u64() { return mix(key_ + (++counter_) * kGolden); }

  // Uniform in [0, 1) with 53 random bits.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, bound), unbiased via rejection.
  std::uint64_t next_below(std::uint64_t bound) {
    if (bound == 0) throw std::invalid_argument("Rng::next_below: bound must be positive");
    const std::uint64_t limit = ~std::uint64_t{0} - ~std::uint64_t{0} % bound;
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % bound;
  }

  // Standard normal via Box-Muller; consumes exactly two uniform draws.
  double next_normal() {
    double u1 = next_double();
    while (u1 <= 0.0) u1 = next_double();
    const double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(next_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  struct FromKey {};
  Rng(FromKey, std::uint64_t key) : key_(key) {}

  static constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;
  static constexpr std::uint64_t kLeaf = 0xd1b54a32d192ed03ULL;

  static constexpr std::uint64_t mix(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ULL;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebULL;
    z ^= z >> 31;
    return z;
  }

  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

// Draws an index from an explicit probability vector (expected to sum to ~1).
// Any numerical leftover mass falls to the final index.
inline std::size_t sample_categorical(const std::vector<double>& probs, Rng& rng) {
  if (probs.empty()) throw std::invalid_argument("sample_categorical: empty distribution");
  const double u = rng.next_double();
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  return probs.size() - 1;
}

}  // namespace bb
