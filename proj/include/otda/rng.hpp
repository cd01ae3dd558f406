#pragma once

// Deterministic sampling built on mt19937_64 only. The engine is fully
// specified by the standard, and every transform below is hand-rolled, so
// seeded runs reproduce bit-for-bit across standard libraries.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace otda {

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

// Substream for (seed, stream tag): mixes both through splitmix64 steps.
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  z = z ^ (z >> 31);
  return Rng(z);
}

// Uniform in [0, 1), 53-bit resolution.
inline double uniform_double(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Uniform in (0, 1]; safe as a logarithm argument.
inline double uniform_double_open(Rng& rng) {
  return (static_cast<double>(rng() >> 11) + 1.0) * 0x1.0p-53;
}

// Uniform integer in [0, n) by rejection; no modulo bias.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x = rng();
  while (x >= limit) x = rng();
  return x % n;
}

// Standard normal via Box-Muller; draws two uniforms per value.
inline double normal_double(Rng& rng) {
  const double u1 = uniform_double_open(rng);
  const double u2 = uniform_double(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

// Gamma(alpha, 1) by Marsaglia-Tsang, with the alpha < 1 boost.
inline double gamma_double(Rng& rng, double alpha) {
  if (alpha < 1.0) {
    const double u = uniform_double_open(rng);
    return gamma_double(rng, alpha + 1.0) * std::pow(u, 1.0 / alpha);
  }
  const double d = alpha - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = normal_double(rng);
    double v = 1.0 + c * x;
    if (v <= 0.0) continue;
    v = v * v * v;
    const double u = uniform_double_open(rng);
    if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
  }
}

// Beta(alpha, alpha) as a ratio of gammas.
inline double beta_symmetric(Rng& rng, double alpha) {
  const double x = gamma_double(rng, alpha);
  const double y = gamma_double(rng, alpha);
  const double s = x + y;
  if (s <= 0.0) return 0.5;  // both underflowed; the symmetric midpoint
  return x / s;
}

// Fisher-Yates shuffle.
template <typename T>
inline void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(uniform_index(rng, i));
    std::swap(v[i - 1], v[j]);
  }
}

inline std::vector<int> random_permutation(std::size_t n, Rng& rng) {
  std::vector<int> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = static_cast<int>(i);
  shuffle(p, rng);
  return p;
}

// Sample m distinct indices from [0, n) without replacement.
inline std::vector<int> sample_without_replacement(std::size_t n, std::size_t m, Rng& rng) {
  std::vector<int> pool(n);
  for (std::size_t i = 0; i < n; ++i) pool[i] = static_cast<int>(i);
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(uniform_index(rng, n - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(m);
  return pool;
}

}  // namespace otda
