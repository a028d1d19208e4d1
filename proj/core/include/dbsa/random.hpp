#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <utility>

namespace dbsa {

/// SplitMix64 (Steele, Lea & Flood 2014). Every random decision in the
/// library flows from one of these, so results are bit-identical across
/// platforms and standard libraries.
class SplitMix64 {
 public:
  explicit constexpr SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

  constexpr std::uint64_t next() noexcept {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1) built from the top 53 bits.
  constexpr double uniform01() noexcept {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
  }

  /// Uniform integer in [0, bound) by rejection; bound must be > 0.
  constexpr std::uint64_t below(std::uint64_t bound) noexcept {
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
      const std::uint64_t r = next();
      if (r >= threshold) return r % bound;
    }
  }

 private:
  std::uint64_t state_;
};

/// The SplitMix64 output function applied to x + golden gamma.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept { return SplitMix64(x).next(); }

/// 64-bit FNV-1a over the bytes of `text`.
constexpr std::uint64_t fnv1a64(std::string_view text) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Child seed for stream `label` of `parent`. Counter-based: child streams do
/// not depend on how many values any other stream consumed.
constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t label) noexcept {
  return mix64(parent ^ mix64(label));
}

constexpr std::uint64_t derive_seed(std::uint64_t parent, std::string_view label) noexcept {
  return derive_seed(parent, fnv1a64(label));
}

/// Fisher-Yates shuffle, back to front.
template <typename T>
void shuffle(std::span<T> values, SplitMix64& rng) noexcept {
  for (std::size_t i = values.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    using std::swap;
    swap(values[i - 1], values[j]);
  }
}

}  // namespace dbsa
