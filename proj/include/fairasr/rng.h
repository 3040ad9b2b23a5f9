#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace fairasr {

// SplitMix64 (Steele, Lea & Flood, 2014): a 64-bit Weyl sequence with an
// avalanche finalizer. Chosen as the dataset PRNG because the whole update
// fits in four lines and reproduces bit-identically on every platform.
// The generator name recorded in dataset metadata is "splitmix64".
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) from the top 53 bits.
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Standard normal via Box-Muller. std::normal_distribution is not
  // reproducible across standard libraries, so the transform is spelled out.
  double gaussian();

  // Unbiased integer in [0, n). Rejection sampling on the low residue range.
  std::uint64_t below(std::uint64_t n);

 private:
  std::uint64_t state_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t fnv1a64(std::string_view text);

// Derives an independent stream for a named object (utterance id, parameter
// name, batcher epoch, ...) from the run seed. Streams depend only on
// (seed, id), never on generation order, so per-object work can be
// parallelized or reordered without changing the output.
std::uint64_t stream_seed(std::uint64_t seed, std::string_view id);

// Fisher-Yates with our own generator; std::shuffle is unspecified.
template <typename T>
void deterministic_shuffle(std::vector<T>& values, SplitMix64& rng) {
  for (std::size_t i = values.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng.below(i));
    std::swap(values[i - 1], values[j]);
  }
}

}  // namespace fairasr
