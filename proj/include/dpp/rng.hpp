#pragma once

#include <cstdint>
#include <limits>

namespace dpp {

// SplitMix64 finalizer. Bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

/// Derive a key from a parent key and a stream index. Used to split the
/// master seed into per-walk / per-attempt / per-site substreams.
constexpr std::uint64_t derive_key(std::uint64_t parent, std::uint64_t index) noexcept {
  return mix64(parent ^ mix64(index + kGolden));
}

/// Map the top 53 bits of a word to [0, 1).
constexpr double to_unit(std::uint64_t bits) noexcept {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// Stateless draw keyed by (key, counter).
constexpr double uniform_at(std::uint64_t key, std::uint64_t counter) noexcept {
  return to_unit(mix64(key + kGolden * (counter + 1)));
}

/// Counter-based generator: output k is mix64(key + golden * k). Two
/// generators with different keys are independent streams; the output
/// sequence never depends on thread scheduling.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit constexpr CounterRng(std::uint64_t key) noexcept : key_(key) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  constexpr result_type operator()() noexcept { return mix64(key_ + kGolden * ++counter_); }

  /// Uniform double in [0, 1) with 53 random bits.
  constexpr double uniform() noexcept { return to_unit((*this)()); }

  /// Uniform integer in [0, n) by multiply-shift (bias < n / 2^64).
  constexpr std::uint64_t below(std::uint64_t n) noexcept {
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>((*this)()) * n) >> 64);
  }

  constexpr std::uint64_t key() const noexcept { return key_; }
  constexpr std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace dpp
