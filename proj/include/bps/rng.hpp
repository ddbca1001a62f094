#pragma once

#include <cstdint>
#include <initializer_list>
#include <limits>
#include <random>

namespace bps {

/// Purposes that get their own family of random streams.
enum class StreamTag : std::uint64_t {
  Simulate = 1,
  Propose = 2,
  Resample = 3,
  Subsample = 4,
  IidFilter = 5,
  BackwardSample = 6,
  ThetaInit = 7,
  Replicate = 8,
  Iteration = 9,
  Test = 99,
};

inline constexpr std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline constexpr std::uint64_t mix_key(std::uint64_t h, std::uint64_t v) {
  std::uint64_t s = h ^ (v + 0x632be59bd9b4e019ULL + (h << 6) + (h >> 2));
  return splitmix64(s);
}

/**
 * SplitMix64 stream. Streams are keyed by (seed, tag, indices...) so each
 * (time, block, particle) gets its own sequence and results do not depend on
 * evaluation order or thread count.
 */
class Rng {
public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

  Rng(std::uint64_t seed, StreamTag tag, std::initializer_list<std::uint64_t> key) {
    std::uint64_t h = mix_key(seed, static_cast<std::uint64_t>(tag));
    for (auto k : key) h = mix_key(h, k);
    state_ = h;
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()() { return splitmix64(state_); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  double normal() { return std::normal_distribution<double>{}(*this); }
  double normal(double mean, double sd) { return mean + sd * normal(); }

private:
  std::uint64_t state_;
};

/// Derive a sub-seed, e.g. per replicate.
inline std::uint64_t derive_seed(std::uint64_t seed, StreamTag tag,
                                 std::initializer_list<std::uint64_t> key) {
  return Rng(seed, tag, key)();
}

}  // namespace bps
