#pragma once

// Shared test helpers: hand-rolled generators and small tensor builders.

#include <algorithm>
#include <cstdint>
#include <vector>

#include "dassf/ops.hpp"
#include "dassf/rng.hpp"

namespace dassf::support {

/// Uniform integer in [lo, hi].
inline std::int64_t draw_int(Rng& rng, std::int64_t lo, std::int64_t hi) {
  return lo + static_cast<std::int64_t>(rng.next_u64() >> 33) % (hi - lo + 1);
}

inline TensorD rand_d(const Shape& s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  return random_uniform<double>(s, rng, lo, hi);
}

inline Tensor rand_f(const Shape& s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  return random_uniform<float>(s, rng, lo, hi);
}

inline TensorD to_d(const Tensor& t) { return t.cast<double>(); }

inline Tensor tensor(Shape s, std::vector<float> v) { return Tensor(std::move(s), std::move(v)); }

inline ConvParams conv_layer(Tensor w, std::optional<Tensor> b = std::nullopt, int stride = 1,
                             std::array<int, 3> pad = {0, 0, 0}, int groups = 1) {
  ConvParams p;
  p.weight = std::move(w);
  p.bias = std::move(b);
  p.stride = stride;
  p.padding = pad;
  p.groups = groups;
  return p;
}

inline std::vector<double> bias_vec(const ConvParams& p) {
  return p.bias ? std::vector<double>(p.bias->data().begin(), p.bias->data().end()) : std::vector<double>{};
}

inline double min_of(const Tensor& t) {
  double m = t[0];
  for (float v : t.data()) m = std::min<double>(m, v);
  return m;
}

inline double max_of(const Tensor& t) {
  double m = t[0];
  for (float v : t.data()) m = std::max<double>(m, v);
  return m;
}

}  // namespace dassf::support
