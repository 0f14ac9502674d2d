#ifndef FORGE_RNG_HPP
#define FORGE_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>

namespace forge {

// splitmix64 finalizer; used to derive independent substreams from
// (seed, index) pairs so parallel generation stays order-independent.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Deterministic RNG. The engine (mt19937_64) has a standardized bit stream;
// all distributions are implemented here explicitly because the standard
// library's distribution objects are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), eng_(seed) {}

  // Substream keyed off the construction seed, not the current engine
  // position, so derive(i) is stable no matter how much has been drawn.
  Rng derive(std::uint64_t index) const { return Rng(mix_seed(seed_, index)); }

  std::uint64_t next_u64() { return eng_(); }

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform01() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Uniform integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n) {
    // Rejection-free modulo bias is negligible for the n used here, but the
    // bounded-rejection loop keeps draws exact.
    const std::uint64_t limit = n * ((~std::uint64_t{0}) / n);
    std::uint64_t x = eng_();
    while (x >= limit) x = eng_();
    return x % n;
  }

  int uniform_int(int lo, int hi) {  // inclusive bounds
    return lo + static_cast<int>(uniform_index(
                    static_cast<std::uint64_t>(hi - lo + 1)));
  }

  bool bernoulli(double p) { return uniform01() < p; }

  // Standard normal via Box-Muller. One uniform pair per draw; no cached
  // spare, so interleaved draw sequences stay reproducible.
  double normal() {
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  double normal(double mean, double std) { return mean + std * normal(); }

  double log_uniform(double lo, double hi) {
    return std::exp(uniform(std::log(lo), std::log(hi)));
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 eng_;
};

// Inverse standard normal CDF (Acklam's rational approximation, |err|<1.2e-9).
double inverse_normal_cdf(double p);

}  // namespace forge

#endif  // FORGE_RNG_HPP
