#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <utility>
#include <vector>

namespace ipreuse {

// Deterministic random source used everywhere the toolkit needs randomness.
//
// mt19937_64 is pinned down by the standard, so the raw stream is identical on
// every platform.  The bounded draw and the shuffle are hand-rolled because
// std::uniform_int_distribution and std::shuffle are implementation-defined
// and would break byte-identical reproducibility across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next() { return gen_(); }

  // Uniform integer in [0, n).  Rejection sampling keeps the result exactly
  // uniform; n must be nonzero.
  std::uint64_t below(std::uint64_t n) {
    // Power-of-two sizes can use a plain mask.
    if ((n & (n - 1)) == 0) return gen_() & (n - 1);
    const std::uint64_t max = std::numeric_limits<std::uint64_t>::max();
    const std::uint64_t limit = max - max % n;
    std::uint64_t v = gen_();
    while (v >= limit) v = gen_();
    return v % n;
  }

  std::uint32_t below32(std::uint32_t n) {
    return static_cast<std::uint32_t>(below(n));
  }

  // Uniform double in [0, 1) built from the top 53 bits.
  double unit() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  // Fisher-Yates, highest index first, so the permutation depends only on the
  // seed and the vector length.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 gen_;
};

// SplitMix64 finalizer; used as the stable hash for sketches so estimates do
// not depend on std::hash, which varies between standard libraries.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

}  // namespace ipreuse
