#include "prefixrank/rng.hpp"

namespace prefixrank {

std::uint64_t fnv1a64(std::string_view s) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t stream) noexcept
    : key_(splitmix64(splitmix64(seed) ^ (stream * 0xD1B54A32D192ED03ULL))) {}

std::uint64_t CounterRng::draw(std::uint64_t counter) const noexcept {
  return splitmix64(key_ + counter * 0x9E3779B97F4A7C15ULL);
}

double CounterRng::unit(std::uint64_t counter) const noexcept {
  return static_cast<double>(draw(counter) >> 11) * 0x1.0p-53;
}

std::uint64_t CounterRng::below(std::uint64_t counter, std::uint64_t n) const noexcept {
  auto k = static_cast<std::uint64_t>(unit(counter) * static_cast<double>(n));
  return k < n ? k : n - 1;
}

}  // namespace prefixrank
