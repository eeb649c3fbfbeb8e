#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace oreo {

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view s);

/// Derives an independent stream seed from a root seed and a component name,
/// so every consumer of randomness is keyed by (root, "component"[, index]).
std::uint64_t derive_seed(std::uint64_t root, std::string_view component);
std::uint64_t derive_seed(std::uint64_t root, std::string_view component,
                          std::uint64_t index);

// mt19937_64 with hand-rolled draw helpers. The engine's output sequence is
// pinned by the standard and the helpers avoid std::*_distribution, so any
// two builds replay identical streams from the same seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  /// Uniform double in [0, 1) with 53 random bits.
  double next_unit() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  /// Uniform integer in [0, n); unbiased via rejection. n must be > 0.
  std::size_t next_below(std::size_t n);

  /// Standard normal via Box-Muller (second value cached).
  double next_normal();

  /// Index draw from (approximately normalized) probabilities by CDF walk.
  std::size_t sample_categorical(std::span<const double> probs);

 private:
  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// k distinct indices from [0, n), uniform, order of selection preserved.
std::vector<std::size_t> sample_without_replacement(std::size_t n,
                                                    std::size_t k, Rng& rng);

}  // namespace oreo
