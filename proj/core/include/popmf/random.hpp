#pragma once

#include <cstdint>
#include <limits>

namespace popmf {

/// SplitMix64 finalizer. Bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Seed of replicate `k` in an ensemble with base seed `base`:
///
///   seed_k = mix64(base ^ mix64(k + 0x9E3779B97F4A7C15))
///
/// Fixed so that ensembles are reproducible across platforms and thread counts.
constexpr std::uint64_t replicate_seed(std::uint64_t base, std::uint64_t k) noexcept {
  return mix64(base ^ mix64(k + 0x9E3779B97F4A7C15ULL));
}

/// Counter-based generator: draw n is mix64(key + (n + 1) * golden). Satisfies
/// UniformRandomBitGenerator, and the whole stream is a pure function of the key.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit constexpr CounterRng(std::uint64_t key) noexcept : key_(key) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  constexpr result_type operator()() noexcept {
    ++counter_;
    return mix64(key_ + counter_ * 0x9E3779B97F4A7C15ULL);
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Exponential(rate) by inverse CDF.
  double exponential(double rate) noexcept;

  /// Uniform index in [0, n) (Lemire's multiply-shift; bias below 2^-64 * n).
  std::uint64_t index(std::uint64_t n) noexcept {
    __extension__ using u128 = unsigned __int128;
    return static_cast<std::uint64_t>((static_cast<u128>((*this)()) * n) >> 64);
  }

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t draws() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace popmf
