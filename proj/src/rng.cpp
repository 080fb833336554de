#include "rflock/rng.hpp"

#include <cmath>
#include <numbers>

namespace rflock {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t stream_key(std::uint64_t seed, StreamPurpose purpose,
                         std::uint64_t index, std::uint64_t sub) noexcept {
  std::uint64_t k = splitmix64(seed);
  k = splitmix64(k ^ static_cast<std::uint64_t>(purpose));
  k = splitmix64(k ^ (index * 0xD1B54A32D192ED03ULL));
  k = splitmix64(k ^ (sub * 0x8CB92BA72F3D8DD7ULL));
  return k;
}

double uniform01(CounterRng& rng) {
  // 53 random mantissa bits, strictly inside (0, 1).
  return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

double standard_normal(CounterRng& rng) {
  const double u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace rflock
