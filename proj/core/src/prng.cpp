#include "hosfl/prng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace hosfl {
namespace {

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;
constexpr std::uint64_t kRoundKey = 0xd6e8feb86659fd93ULL;
constexpr std::uint64_t kPerturbKey = 0xa0761d6478bd642fULL;
constexpr std::uint64_t kDomainKey = 0xe7037ed1a0b428dbULL;
constexpr std::uint64_t kAuxKey = 0x8ebc6af09c88c6e3ULL;

double to_unit(std::uint64_t bits) { return static_cast<double>(bits >> 11) * 0x1.0p-53; }

}  // namespace

std::uint64_t derive_seed(const SeedSpec& spec) {
  std::uint64_t h = mix64(spec.root_seed);
  h = mix64((h ^ spec.round) + kRoundKey);
  h = mix64((h ^ spec.perturbation_index) + kPerturbKey);
  return h;
}

std::uint64_t derive_stream(std::uint64_t root, std::uint64_t domain, std::uint64_t a,
                            std::uint64_t b) {
  std::uint64_t h = mix64(root ^ kGolden);
  h = mix64((h ^ domain) + kDomainKey);
  h = mix64((h ^ a) + kRoundKey);
  h = mix64((h ^ b) + kAuxKey);
  return h;
}

std::uint64_t CounterRng::next_u64() {
  ++counter_;
  return mix64(seed_ + counter_ * kGolden);
}

double CounterRng::uniform() { return to_unit(next_u64()); }

double CounterRng::uniform_open0() { return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; }

std::uint64_t CounterRng::uniform_index(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("uniform_index: n must be positive");
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x = next_u64();
  while (x >= limit) x = next_u64();
  return x % n;
}

double CounterRng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = uniform_open0();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(angle);
  has_spare_ = true;
  return r * std::cos(angle);
}

double CounterRng::gamma(double shape) {
  if (!(shape > 0.0)) throw std::invalid_argument("gamma: shape must be positive");
  if (shape < 1.0) {
    // G(a) = G(a + 1) * U^(1/a)
    const double g = gamma(shape + 1.0);
    return g * std::pow(uniform_open0(), 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = 0.0;
    double v = 0.0;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform_open0();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

Vector gaussian_vector(std::uint64_t seed, std::size_t dim) {
  Vector out(dim);
  CounterRng rng(seed);
  for (std::size_t i = 0; i < dim; ++i) out[i] = rng.normal();
  return out;
}

}  // namespace hosfl
