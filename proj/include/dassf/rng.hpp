#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

#include "dassf/tensor.hpp"

namespace dassf {

/// 64-bit linear congruential generator, state' = state * 6364136223846793005 + 1442695040888963407
/// (mod 2^64). Uniforms take the top 53 bits; normals use Box-Muller and emit
/// the cosine then the sine branch of each pair.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ = state_ * 6364136223846793005ULL + 1442695040888963407ULL;
    return state_;
  }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// FNV-1a over the bytes of `s`.
inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

/// Seed of the independent stream used for the tensor called `name`.
inline std::uint64_t stream_seed(std::uint64_t seed, std::string_view name) {
  return fnv1a64(name) ^ (seed * 0x9E3779B97F4A7C15ULL);
}

template <class T = float>
BasicTensor<T> random_normal(const Shape& shape, Rng& rng, double mean = 0.0, double stddev = 1.0) {
  BasicTensor<T> t(shape);
  for (T& v : t.mutable_data()) v = static_cast<T>(rng.normal(mean, stddev));
  return t;
}

template <class T = float>
BasicTensor<T> random_uniform(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  BasicTensor<T> t(shape);
  for (T& v : t.mutable_data()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

}  // namespace dassf
