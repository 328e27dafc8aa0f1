#include "derand/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace derand {

std::uint64_t Rng::uniform(std::uint64_t bound) {
  if (bound == 0) {
    throw std::invalid_argument("Rng::uniform: bound must be positive");
  }
  // Values below `threshold` would bias the low residues.
  const std::uint64_t threshold = (std::uint64_t{0} - bound) % bound;
  for (;;) {
    const std::uint64_t x = next();
    if (x >= threshold) {
      return x % bound;
    }
  }
}

double Rng::exponential(double rate) {
  if (!(rate > 0.0)) {
    throw std::invalid_argument("Rng::exponential: rate must be positive");
  }
  // 1 - u lies in (0, 1], so the log is finite.
  return -std::log1p(-uniform01()) / rate;
}

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  return mix64(mix64(master) ^ mix64(index + 0x632BE59BD9B4E019ull));
}

} // namespace derand
