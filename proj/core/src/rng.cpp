#include "interconnect/rng.hpp"

#include <cmath>
#include <numbers>

namespace interconnect {

double uniform01(std::uint64_t key, std::uint64_t index) noexcept {
  const std::uint64_t bits = mix_keys(key, index) >> 11;
  return static_cast<double>(bits) * 0x1.0p-53;
}

double standard_normal(std::uint64_t key, std::uint64_t index) noexcept {
  // 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform01(key, 2 * index);
  const double u2 = uniform01(key, 2 * index + 1);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace interconnect
