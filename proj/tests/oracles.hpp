#pragma once

// Brute-force scalar oracles used by the tests. They are written
// independently of the library kernels: explicit zero-padded copies instead
// of bounds arithmetic, one output value per call, all in double.

#include <algorithm>
#include <cmath>
#include <vector>

#include "dassf/ops.hpp"
#include "dassf/rng.hpp"

namespace dassf::oracle {

/// Zero-pads the last three axes of a 5D tensor.
inline std::vector<double> pad5(const TensorD& x, int pd, int ph, int pw, Shape& padded) {
  const auto n = x.dim(0), c = x.dim(1), d = x.dim(2), h = x.dim(3), w = x.dim(4);
  padded = {n, c, d + 2 * pd, h + 2 * ph, w + 2 * pw};
  std::vector<double> out(static_cast<std::size_t>(shape_numel(padded)), 0.0);
  for (std::int64_t a = 0; a < n; ++a)
    for (std::int64_t b = 0; b < c; ++b)
      for (std::int64_t z = 0; z < d; ++z)
        for (std::int64_t y = 0; y < h; ++y)
          for (std::int64_t xx = 0; xx < w; ++xx)
            out[static_cast<std::size_t>(((((a * c + b) * padded[2] + z + pd) * padded[3]) + y + ph) * padded[4] + xx + pw)] =
                x.at({a, b, z, y, xx});
  return out;
}

/// Direct 3D convolution; conv2d callers pass depth-1 views.
inline TensorD conv3d(const TensorD& x, const TensorD& w, const std::vector<double>* bias, int stride,
                      std::array<int, 3> pad, int groups) {
  Shape ps;
  const std::vector<double> xp = pad5(x, pad[0], pad[1], pad[2], ps);
  const auto n = x.dim(0), oc = w.dim(0), icg = w.dim(1), kd = w.dim(2), kh = w.dim(3), kw = w.dim(4);
  const auto od = (ps[2] - kd) / stride + 1, oh = (ps[3] - kh) / stride + 1, ow = (ps[4] - kw) / stride + 1;
  const auto ocg = oc / groups;
  TensorD out({n, oc, od, oh, ow});
  auto dst = out.mutable_data();
  for (std::int64_t a = 0; a < n; ++a)
    for (std::int64_t o = 0; o < oc; ++o)
      for (std::int64_t z = 0; z < od; ++z)
        for (std::int64_t y = 0; y < oh; ++y)
          for (std::int64_t xx = 0; xx < ow; ++xx) {
            double s = bias ? (*bias)[static_cast<std::size_t>(o)] : 0.0;
            for (std::int64_t i = 0; i < icg; ++i) {
              const std::int64_t ic = (o / ocg) * icg + i;
              for (std::int64_t q = 0; q < kd; ++q)
                for (std::int64_t r = 0; r < kh; ++r)
                  for (std::int64_t t = 0; t < kw; ++t)
                    s += w.at({o, i, q, r, t}) *
                         xp[static_cast<std::size_t>((((a * ps[1] + ic) * ps[2] + z * stride + q) * ps[3] + y * stride + r) * ps[4] +
                                                     xx * stride + t)];
            }
            dst[static_cast<std::size_t>((((a * oc + o) * od + z) * oh + y) * ow + xx)] = s;
          }
  return out;
}

inline TensorD conv2d(const TensorD& x, const TensorD& w, const std::vector<double>* bias, int stride, int ph, int pw,
                      int groups) {
  const TensorD x5 = x.reshape({x.dim(0), x.dim(1), 1, x.dim(2), x.dim(3)});
  const TensorD w5 = w.reshape({w.dim(0), w.dim(1), 1, w.dim(2), w.dim(3)});
  const TensorD out = conv3d(x5, w5, bias, stride, {0, ph, pw}, groups);
  return out.reshape({out.dim(0), out.dim(1), out.dim(3), out.dim(4)});
}

inline double pool_window(const TensorD& x, std::int64_t n, std::int64_t c, std::int64_t y0, std::int64_t x0, int k,
                          bool is_max) {
  std::vector<double> vals;
  for (int a = 0; a < k; ++a)
    for (int b = 0; b < k; ++b) vals.push_back(x.at({n, c, y0 + a, x0 + b}));
  if (is_max) return *std::max_element(vals.begin(), vals.end());
  double s = 0.0;
  for (double v : vals) s += v;
  return s / static_cast<double>(vals.size());
}

/// Bilinear value of one channel at normalized (u, v), endpoints at pixel centers.
inline double bilinear_at(const TensorD& x, std::int64_t n, std::int64_t c, double u, double v) {
  const auto h = x.dim(2), w = x.dim(3);
  const double px = (u + 1.0) / 2.0 * static_cast<double>(w - 1);
  const double py = (v + 1.0) / 2.0 * static_cast<double>(h - 1);
  double total = 0.0;
  // Sum of tent-weighted contributions from every pixel; only the 4 nearest are non-zero.
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t xx = 0; xx < w; ++xx) {
      const double wy = std::max(0.0, 1.0 - std::abs(py - static_cast<double>(y)));
      const double wx = std::max(0.0, 1.0 - std::abs(px - static_cast<double>(xx)));
      total += wy * wx * x.at({n, c, y, xx});
    }
  }
  return total;
}

/// Half-pixel bilinear resize with edge clamping, one tent per pixel.
inline TensorD bilinear_resize(const TensorD& x, int s) {
  const auto n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  TensorD out({n, c, h * s, w * s});
  auto dst = out.mutable_data();
  std::size_t flat = 0;
  for (std::int64_t a = 0; a < n; ++a)
    for (std::int64_t b = 0; b < c; ++b)
      for (std::int64_t y = 0; y < h * s; ++y)
        for (std::int64_t xx = 0; xx < w * s; ++xx) {
          const double sy = std::clamp((y + 0.5) / s - 0.5, 0.0, static_cast<double>(h - 1));
          const double sx = std::clamp((xx + 0.5) / s - 0.5, 0.0, static_cast<double>(w - 1));
          double total = 0.0;
          for (std::int64_t i = 0; i < h; ++i)
            for (std::int64_t j = 0; j < w; ++j)
              total += std::max(0.0, 1.0 - std::abs(sy - i)) * std::max(0.0, 1.0 - std::abs(sx - j)) * x.at({a, b, i, j});
          dst[flat++] = total;
        }
  return out;
}

inline TensorD random(const Shape& shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  return random_uniform<double>(shape, rng, lo, hi);
}

}  // namespace dassf::oracle
