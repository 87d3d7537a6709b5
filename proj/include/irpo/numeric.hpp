#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

namespace irpo {

// Stable log(sum(exp(x))). Returns -inf for an empty range.
inline double logsumexp(std::span<const double> x) {
  if (x.empty()) return -std::numeric_limits<double>::infinity();
  const double hi = *std::max_element(x.begin(), x.end());
  if (!std::isfinite(hi)) return hi;
  double acc = 0.0;
  for (double v : x) acc += std::exp(v - hi);
  return hi + std::log(acc);
}

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(sigmoid(z)) without overflow for large |z|.
inline double log_sigmoid(double z) {
  if (z >= 0.0) return -std::log1p(std::exp(-z));
  return z - std::log1p(std::exp(z));
}

inline std::vector<double> softmax(std::span<const double> x) {
  std::vector<double> out(x.size());
  const double lse = logsumexp(x);
  for (std::size_t j = 0; j < x.size(); ++j) out[j] = std::exp(x[j] - lse);
  return out;
}

inline std::vector<double> log_softmax(std::span<const double> x) {
  std::vector<double> out(x.size());
  const double lse = logsumexp(x);
  for (std::size_t j = 0; j < x.size(); ++j) out[j] = x[j] - lse;
  return out;
}

inline double l2_norm(std::span<const double> x) {
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return std::sqrt(acc);
}

inline bool all_finite(std::span<const double> x) {
  return std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); });
}

// splitmix64 finalizer; used to derive independent stream seeds from a base
// seed and a counter.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Uniform double in [0, 1) from the top 53 bits of a 64-bit engine draw.
template <class Engine>
double uniform01(Engine& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Inverse-CDF draw from a probability vector.
template <class Engine>
std::size_t sample_index(std::span<const double> probs, Engine& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  for (std::size_t j = 0; j < probs.size(); ++j) {
    acc += probs[j];
    if (u < acc) return j;
  }
  // Rounding left a sliver above the last cumulative value.
  for (std::size_t j = probs.size(); j-- > 0;) {
    if (probs[j] > 0.0) return j;
  }
  return probs.size() - 1;
}

}  // namespace irpo
