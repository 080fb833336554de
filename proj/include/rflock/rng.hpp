#ifndef RFLOCK_RNG_HPP
#define RFLOCK_RNG_HPP

#include <cstdint>
#include <limits>
#include <random>

namespace rflock {

/// Purposes for independent random streams. Adding a purpose never perturbs
/// the draws of existing ones.
enum class StreamPurpose : std::uint64_t {
  kLevelNoise = 1,     // eta_i
  kTransferNoise = 2,  // epsilon_ij
  kPolicy = 3,
  kForecast = 4,
  kInit = 5,
  kEpisode = 6,
  kMonteCarlo = 7,
  kSynthetic = 8,
  kMinibatch = 9,
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Counter-based generator: the n-th output is a pure function of
/// (key, n). Satisfies UniformRandomBitGenerator so it plugs into <random>
/// distributions.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  CounterRng() = default;
  explicit CounterRng(std::uint64_t key) : key_(key) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() noexcept {
    return splitmix64(key_ ^ splitmix64(counter_++));
  }

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

/// Derives the key of stream (seed, purpose, index, sub). `index` is usually
/// a node id; `sub` an episode or worker index.
std::uint64_t stream_key(std::uint64_t seed, StreamPurpose purpose,
                         std::uint64_t index, std::uint64_t sub = 0) noexcept;

inline CounterRng make_stream(std::uint64_t seed, StreamPurpose purpose,
                              std::uint64_t index, std::uint64_t sub = 0) {
  return CounterRng(stream_key(seed, purpose, index, sub));
}

/// Standard normal draw. Uses an explicit Box-Muller transform so that
/// streams are identical across standard library implementations.
double standard_normal(CounterRng& rng);
double uniform01(CounterRng& rng);

}  // namespace rflock

#endif  // RFLOCK_RNG_HPP
