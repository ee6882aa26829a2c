#pragma once

#include <cstddef>
#include <cstdint>

#include "hosfl/numeric.hpp"

namespace hosfl {

/// Identifies one shared perturbation: (run root seed, round t, perturbation p).
struct SeedSpec {
  std::uint64_t root_seed = 0;
  std::uint64_t round = 0;
  std::uint64_t perturbation_index = 1;
};

/// SplitMix64 finalizer (Stafford variant 13). Bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Stream seed for one (root, t, p) triple.
///
/// Each field is absorbed in turn: h <- mix64(h ^ field + k_i) with distinct
/// odd constants k_i, starting from mix64(root). The construction is fixed;
/// changing it invalidates every stored history.
std::uint64_t derive_seed(const SeedSpec& spec);

/// Sub-stream seed for non-perturbation randomness (client sampling, batches,
/// data generation). `domain` separates consumers sharing one root.
std::uint64_t derive_stream(std::uint64_t root, std::uint64_t domain, std::uint64_t a,
                            std::uint64_t b = 0);

/// Counter-based generator: output i is mix64(seed + (i + 1) * golden).
/// A value type with no shared state; copying it forks the stream.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  /// Uniform in (0, 1].
  double uniform_open0();
  /// Uniform integer in [0, n); n > 0. Rejection sampling, unbiased.
  std::uint64_t uniform_index(std::uint64_t n);
  /// Standard normal via Box-Muller; caches the paired sine draw.
  double normal();
  /// Gamma(shape, 1) via Marsaglia-Tsang, with the shape<1 boost.
  double gamma(double shape);

  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// `dim` i.i.d. N(0, 1) draws from the counter stream of `seed`.
/// Box-Muller on consecutive counter pairs: (u1, u2) -> sqrt(-2 ln u1) * (cos, sin)(2 pi u2).
/// Bit-identical for identical (seed, dim); a prefix of a longer draw.
Vector gaussian_vector(std::uint64_t seed, std::size_t dim);

}  // namespace hosfl
