#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "causalib/tensor.hpp"

namespace causalib {

// Reproducibility contract: every random draw in the library comes from
// MT19937-64 with the transforms below. std::mt19937_64 output is fully
// specified by the standard; the distribution adapters in <random> are not,
// so uniform/normal/shuffle are implemented here explicitly. Identical seeds
// give bit-identical streams on every platform.

/// splitmix64 mix step, used to derive independent stream seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derive a stream seed from a base seed and up to three indices
/// (seed chain: splitmix over base, then each index+1).
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a = 0, std::uint64_t b = 0,
                                 std::uint64_t c = 0) {
  std::uint64_t s = splitmix64(base);
  s = splitmix64(s ^ (a + 1));
  s = splitmix64(s ^ (b + 1));
  s = splitmix64(s ^ (c + 1));
  return s;
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform double in [0,1) with 53 bits of precision.
  double uniform() { return (gen_() >> 11) * 0x1.0p-53; }

  /// Uniform double in [lo,hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller; second value of the pair is cached.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    // u1 in (0,1] so log() stays finite.
    double u1 = 1.0 - uniform();
    double u2 = uniform();
    double radius = std::sqrt(-2.0 * std::log(u1));
    double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    have_spare_ = true;
    return radius * std::cos(angle);
  }

  /// Unbiased integer in [0,n) by rejection.
  std::uint64_t bounded(std::uint64_t n) {
    const std::uint64_t limit = n * ((~std::uint64_t{0}) / n);
    std::uint64_t x;
    do {
      x = gen_();
    } while (x >= limit);
    return x % n;
  }

  Tensor normal_tensor(Shape shape, double mean = 0.0, double stddev = 1.0) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : t.data) v = mean + stddev * normal();
    return t;
  }

  Tensor uniform_tensor(Shape shape, double lo, double hi) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : t.data) v = uniform(lo, hi);
    return t;
  }

 private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

/// Fisher-Yates: for i = n-1 .. 1, swap(a[i], a[bounded(i+1)]).
inline std::vector<std::size_t> random_permutation(std::size_t n, Rng& rng) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  for (std::size_t i = n; i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng.bounded(i));
    std::swap(p[i - 1], p[j]);
  }
  return p;
}

}  // namespace causalib
