#pragma once

#include <cstdint>
#include <string_view>

namespace interconnect {

// Stateless counter-based randomness. Every random draw is a pure function of
// (key, index), so results never depend on call order or thread scheduling.

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t mix_keys(std::uint64_t a, std::uint64_t b) noexcept {
  return splitmix64(a ^ splitmix64(b + 0x632BE59BD9B4E019ULL));
}

// FNV-1a; used to derive per-parameter init streams from names.
constexpr std::uint64_t hash_name(std::string_view s) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

// Uniform in [0, 1) with 53 random bits.
double uniform01(std::uint64_t key, std::uint64_t index) noexcept;

// Standard normal via Box-Muller on two independent uniforms.
double standard_normal(std::uint64_t key, std::uint64_t index) noexcept;

// Per-run stream of op-call keys. The whole state is (seed, counter), which
// the checkpoint stores so that a resumed run draws the same keys.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed = 0, std::uint64_t counter = 0) noexcept
      : seed_(seed), counter_(counter) {}

  std::uint64_t next_key() noexcept { return mix_keys(seed_, counter_++); }

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_;
};

}  // namespace interconnect
