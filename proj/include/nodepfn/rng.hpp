#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <utility>
#include <vector>

namespace nodepfn {

// Counter-free deterministic RNG: splitmix64 seeding + xoshiro256** core.
// All samplers in this project draw from Rng only, so any sampled object is a
// pure function of its seed regardless of platform or thread count.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) {
    uint64_t x = seed;
    for (auto& word : s_) word = splitmix64(x);
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n), n >= 1. Rejection-free bias is negligible for
  // the n used here, but use Lemire-style rejection anyway for exactness.
  uint64_t uniform_int(uint64_t n) {
    if (n <= 1) return 0;
    const uint64_t threshold = (0 - n) % n;
    for (;;) {
      const uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  // Inclusive integer range.
  int uniform_int(int lo, int hi) {
    return lo + static_cast<int>(uniform_int(static_cast<uint64_t>(hi - lo + 1)));
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Standard normal via Box-Muller (cached spare kept out on purpose: every
  // draw consumes a fixed number of raw words, which keeps derived streams
  // reproducible when call sites change).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  double normal(double mu, double sigma) { return mu + sigma * normal(); }

  double lognormal(double mu, double sigma) { return std::exp(normal(mu, sigma)); }

  // Power-function law with density a*x^(a-1) on [0,1]; inverse-CDF sample.
  double power(double a) { return std::pow(uniform(), 1.0 / a); }

  // Beta(a, b) via two gamma draws (Marsaglia-Tsang). Degenerate shapes give
  // the distribution's limit points.
  double beta(double a, double b) {
    if (a <= 0) return 0.0;
    if (b <= 0) return 1.0;
    const double x = gamma(a);
    const double y = gamma(b);
    return x / (x + y);
  }

  double gamma(double shape) {
    if (shape < 1.0) {
      const double u = uniform();
      return gamma(shape + 1.0) * std::pow(u > 0 ? u : 1e-300, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x = normal();
      double v = 1.0 + c * x;
      if (v <= 0.0) continue;
      v = v * v * v;
      const double u = uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      const size_t j = uniform_int(static_cast<uint64_t>(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  static uint64_t splitmix64(uint64_t& x) {
    uint64_t z = (x += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  uint64_t s_[4];
};

// Stable seed derivation: hash-combine a root seed with a tag and indices.
// Used as hash(global_seed, epoch, step, batch_index) for per-graph streams.
inline uint64_t derive_seed(uint64_t root, std::initializer_list<uint64_t> path) {
  uint64_t h = root ^ 0x51bba7d6c8b5d1c7ull;
  for (uint64_t p : path) {
    h ^= p + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    h = Rng::splitmix64(h);
  }
  return h;
}

inline uint64_t derive_seed(uint64_t root, const char* tag, std::initializer_list<uint64_t> path = {}) {
  uint64_t h = root;
  for (const char* c = tag; *c; ++c) {
    h ^= static_cast<uint64_t>(static_cast<unsigned char>(*c));
    h = Rng::splitmix64(h);
  }
  return derive_seed(h, path);
}

}  // namespace nodepfn
