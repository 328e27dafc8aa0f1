#pragma once

#include <cstdint>
#include <random>

namespace derand {

/// Seeded random source shared by every simulated component.
///
/// Wraps std::mt19937_64 (whose output sequence is fixed by the standard) and
/// derives bounded integers and doubles itself, so that a given seed yields
/// the same draws with any standard library.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform integer in [0, bound). bound must be nonzero.
  std::uint64_t uniform(std::uint64_t bound);

  /// Uniform integer in [lo, hi] (inclusive).
  std::uint64_t uniform_between(std::uint64_t lo, std::uint64_t hi) {
    return lo + uniform(hi - lo + 1);
  }

  /// Uniform double in [0, 1) with 53 bits of precision.
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  bool coin() { return (next() >> 63) != 0; }

  /// Exponentially distributed gap with the given rate (events per unit).
  double exponential(double rate);

private:
  std::mt19937_64 engine_;
};

/// SplitMix64 finaliser; bijective on 64-bit words.
std::uint64_t mix64(std::uint64_t x);

/// Independent child seed for (master, index); order-free, so trial i gets
/// the same stream regardless of which trials ran before it.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

/// Named sub-streams of one trial seed.
enum class Stream : std::uint64_t {
  Resolver = 1,
  Nat = 2,
  Attacker = 3,
  Network = 4,
  CrossTraffic = 5,
  Servers = 6,
};

inline std::uint64_t derive_seed(std::uint64_t trial_seed, Stream s) {
  return derive_seed(trial_seed, 0xD1B54A32D192ED03ull * static_cast<std::uint64_t>(s));
}

} // namespace derand
