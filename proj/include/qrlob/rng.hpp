#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "qrlob/errors.hpp"

namespace qrlob {

// Counter-based 64-bit generator (SplitMix64 output function over an
// incrementing Weyl counter). Every random draw in the library flows through
// this generator and the explicit transforms below, so a run is reproducible
// from its seed on any IEEE-754 platform.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  explicit SplitMix64(std::uint64_t seed = 0) : counter_(seed) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() {
    return std::numeric_limits<std::uint64_t>::max();
  }

  result_type operator()() {
    std::uint64_t z = (counter_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Independent stream for a sub-task (e.g. one day of a batch).
  SplitMix64 split(std::uint64_t stream) {
    SplitMix64 child(operator()() ^ (0x9E3779B97F4A7C15ull * (stream + 1)));
    return child;
  }

 private:
  std::uint64_t counter_;
};

// Uniform double in [0, 1), 53-bit resolution.
inline double uniform01(SplitMix64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline bool bernoulli(SplitMix64& rng, double p) { return uniform01(rng) < p; }

// Exponential with given rate. -log(1-U) keeps 0 out of the log.
inline double exponential(SplitMix64& rng, double rate) {
  if (!(rate > 0.0)) throw NumericalError("exponential draw requires rate > 0");
  return -std::log1p(-uniform01(rng)) / rate;
}

// Uniform integer in [lo, hi]. The multiply-and-floor construction is fixed
// so that logs replay identically across platforms.
inline std::int64_t uniform_int(SplitMix64& rng, std::int64_t lo,
                                std::int64_t hi) {
  if (hi < lo) throw NumericalError("uniform_int requires lo <= hi");
  const double span = static_cast<double>(hi - lo + 1);
  auto offset = static_cast<std::int64_t>(uniform01(rng) * span);
  if (offset > hi - lo) offset = hi - lo;
  return lo + offset;
}

// Index drawn proportionally to non-negative weights. Returns weights.size()
// when the total weight is zero.
inline std::size_t discrete(SplitMix64& rng, std::span<const double> weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) return weights.size();
  double target = uniform01(rng) * total;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    target -= weights[i];
    if (target < 0.0) return i;
  }
  // Rounding pushed the target past the last positive weight.
  for (std::size_t i = weights.size(); i-- > 0;) {
    if (weights[i] > 0.0) return i;
  }
  return weights.size();
}

}  // namespace qrlob
