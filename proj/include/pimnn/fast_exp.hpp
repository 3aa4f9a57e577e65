#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>

namespace pimnn {

// Exponential by writing a scaled-and-biased argument straight into the
// high 32 bits of an IEEE-754 double (exponent field plus the top 20
// mantissa bits); the low word stays zero. The fractional part of x/ln2
// lands in the mantissa, which is a piecewise-linear stand-in for 2^f.
//
// Frozen constants:
//   scale = 2^20 / ln 2          (1512775.395...)
//   bias  = 1023 * 2^20 - 60801  (1072632447)
// 60801 is the shift that minimises RMS relative error. The resulting
// maximum relative error is 3.94% and fast_exp(0) == 0.97100782f.
inline constexpr double kFastExpScale = 1048576.0 / 0.69314718055994530942;
inline constexpr std::int32_t kFastExpBias = 1072693248 - 60801;
inline constexpr float kFastExpMinArg = -87.0f;
inline constexpr float kFastExpMaxArg = 87.0f;

/// Approximate e^x. Arguments below -87 return 0, above 87 return +inf.
inline float fast_exp(float x) {
  if (x < kFastExpMinArg) return 0.0f;
  if (x > kFastExpMaxArg) return std::numeric_limits<float>::infinity();
  const auto hi = static_cast<std::int32_t>(kFastExpScale * static_cast<double>(x) + kFastExpBias);
  const std::uint64_t bits = static_cast<std::uint64_t>(static_cast<std::uint32_t>(hi)) << 32;
  return static_cast<float>(std::bit_cast<double>(bits));
}

}  // namespace pimnn
