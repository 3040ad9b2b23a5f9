#include "fairasr/rng.h"

#include <cmath>
#include <numbers>

namespace fairasr {

double SplitMix64::gaussian() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // u1 in (0, 1] so the log is finite.
  double u1 = static_cast<double>((next() >> 11) + 1) * 0x1.0p-53;
  double u2 = uniform01();
  double radius = std::sqrt(-2.0 * std::log(u1));
  double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

std::uint64_t SplitMix64::below(std::uint64_t n) {
  // 2^64 mod n; values under the threshold would bias the residue.
  std::uint64_t threshold = (0 - n) % n;
  for (;;) {
    std::uint64_t r = next();
    if (r >= threshold) return r % n;
  }
}

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t hash = 0xCBF29CE484222325ULL;
  for (unsigned char c : text) {
    hash ^= c;
    hash *= 0x100000001B3ULL;
  }
  return hash;
}

std::uint64_t stream_seed(std::uint64_t seed, std::string_view id) {
  SplitMix64 mixer(seed);
  SplitMix64 finisher(mixer.next() ^ fnv1a64(id));
  return finisher.next();
}

}  // namespace fairasr
