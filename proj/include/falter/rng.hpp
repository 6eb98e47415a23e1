#pragma once

#include <cstdint>
#include <limits>

namespace falter {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Counter-based generator: the n-th output is a bijective mix of
/// (key, n), so streams for distinct keys are independent and any stream can
/// be derived without touching another. Satisfies UniformRandomBitGenerator.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit CounterRng(std::uint64_t key) : key_(mix64(key ^ 0x9e3779b97f4a7c15ULL)) {}

  /// Stream for (seed, a, b), e.g. (seed, replication, purpose).
  static CounterRng stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
    return CounterRng(mix64(mix64(seed) + 0x632be59bd9b4e019ULL * (a + 1)) ^ mix64(b + 0x1234567ULL));
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return mix64(key_ + 0x9e3779b97f4a7c15ULL * ++counter_); }

  std::uint64_t counter() const { return counter_; }
  std::uint64_t key() const { return key_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace falter
