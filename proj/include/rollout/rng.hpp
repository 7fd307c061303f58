#pragma once

#include <cstdint>
#include <numeric>
#include <vector>

namespace rollout {

// Deterministic PRNG used throughout the library. We avoid the standard
// distributions so that results are reproducible across standard library
// implementations; only the raw mt19937_64 stream is relied upon.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(split_mix(seed)) {}

  std::uint64_t next_u64() {
    // xorshift* step on top of a splitmix-initialized state.
    std::uint64_t x = state_;
    x ^= x >> 12;
    x ^= x << 25;
    x ^= x >> 27;
    state_ = x;
    return x * 0x2545F4914F6CDD1DULL;
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, bound). Rejection sampling keeps it unbiased.
  std::uint64_t below(std::uint64_t bound) {
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
      const std::uint64_t r = next_u64();
      if (r >= threshold) return r % bound;
    }
  }

  static std::uint64_t split_mix(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
  }

 private:
  std::uint64_t state_;
};

// Per-replication seed, independent of execution order of the workers.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  return base ^ Rng::split_mix(index);
}

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng.below(i));
    std::swap(v[i - 1], v[j]);
  }
}

inline std::vector<int> random_permutation(int n, Rng& rng) {
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  shuffle(perm, rng);
  return perm;
}

}  // namespace rollout
