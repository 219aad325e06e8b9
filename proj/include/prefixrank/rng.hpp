#pragma once

#include <cstdint>
#include <string_view>

namespace prefixrank {

/// SplitMix64 output finalizer (Steele, Lea & Flood 2014).
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Derives an independent 64-bit seed from a base seed and a salt.
constexpr std::uint64_t combine_seed(std::uint64_t seed, std::uint64_t salt) noexcept {
  return splitmix64(seed ^ splitmix64(salt + 0x632BE59BD9B4E019ULL));
}

/// FNV-1a over the bytes of `s`; used to key per-document streams by doc_id.
std::uint64_t fnv1a64(std::string_view s) noexcept;

/// Counter-based generator ("SplitMix64 in counter mode").
///
/// A stream is identified by (seed, stream); its i-th draw is a pure function
///
///   key      = splitmix64(splitmix64(seed) ^ (stream * 0xD1B54A32D192ED03))
///   draw(i)  = splitmix64(key + i * 0x9E3779B97F4A7C15)
///   unit(i)  = (draw(i) >> 11) * 2^-53          in [0, 1)
///
/// so any draw can be recomputed without replaying earlier ones. Every seeded
/// operation in the library consumes randomness through this type.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream) noexcept;

  std::uint64_t draw(std::uint64_t counter) const noexcept;
  double unit(std::uint64_t counter) const noexcept;
  /// floor(unit(counter) * n); n must be > 0.
  std::uint64_t below(std::uint64_t counter, std::uint64_t n) const noexcept;

  std::uint64_t key() const noexcept { return key_; }

 private:
  std::uint64_t key_;
};

/// Sequential view over a CounterRng: the k-th call reads counter k.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream) noexcept : rng_(seed, stream) {}

  double unit() noexcept { return rng_.unit(next_++); }
  std::uint64_t below(std::uint64_t n) noexcept { return rng_.below(next_++, n); }
  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * unit(); }
  std::uint64_t position() const noexcept { return next_; }

 private:
  CounterRng rng_;
  std::uint64_t next_ = 0;
};

}  // namespace prefixrank
