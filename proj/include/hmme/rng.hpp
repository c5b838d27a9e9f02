#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace hmme {

// SplitMix64 finalizer over (seed, stream). Used to derive independent,
// order-free child seeds so that parallel jobs never share a stream.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept;

// Seeded random source. Wraps mt19937_64 with distribution code written
// here so that draws are reproducible across standard library vendors.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform();

  // Uniform integer in [0, bound). bound must be > 0.
  std::size_t below(std::size_t bound);

  // Index drawn with probability proportional to weights[i].
  std::size_t categorical(std::span<const double> weights);

  // k distinct indices from [0, n), uniformly, returned in ascending order.
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[below(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace hmme
