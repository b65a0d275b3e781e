#include "dassf/reference.hpp"

#include <algorithm>
#include <cmath>

namespace dassf::reference {
namespace {

template <class T>
BasicTensor<T> conv_direct(const BasicTensor<T>& x5, const BasicTensor<T>& w5, const BasicConvParams<T>& p) {
  const auto n = x5.dim(0), c = x5.dim(1), d = x5.dim(2), h = x5.dim(3), w = x5.dim(4);
  const auto oc = w5.dim(0), icg = w5.dim(1), kd = w5.dim(2), kh = w5.dim(3), kw = w5.dim(4);
  if (icg * p.groups != c) throw DimensionError("C", "reference conv: channel mismatch");
  const int s = p.stride;
  const int pd = p.padding[0], ph = p.padding[1], pw = p.padding[2];
  const auto od = (d + 2 * pd - kd) / s + 1, oh = (h + 2 * ph - kh) / s + 1, ow = (w + 2 * pw - kw) / s + 1;
  const auto ocg = oc / p.groups;
  BasicTensor<T> out({n, oc, od, oh, ow});
  auto dst = out.mutable_data();
  std::size_t flat = 0;
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t o = 0; o < oc; ++o) {
      const std::int64_t group = o / ocg;
      for (std::int64_t z = 0; z < od; ++z) {
        for (std::int64_t y = 0; y < oh; ++y) {
          for (std::int64_t xx = 0; xx < ow; ++xx) {
            double acc = p.bias ? static_cast<double>((*p.bias)[o]) : 0.0;
            for (std::int64_t i = 0; i < icg; ++i) {
              const std::int64_t ic = group * icg + i;
              for (std::int64_t a = 0; a < kd; ++a) {
                const std::int64_t iz = z * s - pd + a;
                if (iz < 0 || iz >= d) continue;
                for (std::int64_t bb = 0; bb < kh; ++bb) {
                  const std::int64_t iy = y * s - ph + bb;
                  if (iy < 0 || iy >= h) continue;
                  for (std::int64_t cc = 0; cc < kw; ++cc) {
                    const std::int64_t ix = xx * s - pw + cc;
                    if (ix < 0 || ix >= w) continue;
                    acc += static_cast<double>(w5[(((o * icg + i) * kd + a) * kh + bb) * kw + cc]) *
                           static_cast<double>(x5[(((b * c + ic) * d + iz) * h + iy) * w + ix]);
                  }
                }
              }
            }
            dst[flat++] = static_cast<T>(acc);
          }
        }
      }
    }
  }
  return out;
}

}  // namespace

template <class T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicConvParams<T>& p) {
  if (x.rank() != 4 || p.weight.rank() != 4) throw DimensionError("rank", "reference conv2d expects rank 4");
  const auto& ws = p.weight.shape();
  BasicTensor<T> out = conv_direct(x.reshape({x.dim(0), x.dim(1), 1, x.dim(2), x.dim(3)}),
                                   p.weight.reshape({ws[0], ws[1], 1, ws[2], ws[3]}), p);
  return out.reshape({out.dim(0), out.dim(1), out.dim(3), out.dim(4)});
}

template <class T>
BasicTensor<T> conv3d(const BasicTensor<T>& x, const BasicConvParams<T>& p) {
  if (x.rank() != 5 || p.weight.rank() != 5) throw DimensionError("rank", "reference conv3d expects rank 5");
  return conv_direct(x, p.weight, p);
}

template <class T>
BasicTensor<T> pool2d(const BasicTensor<T>& x, PoolMode mode, int kernel, int stride) {
  const auto n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (kernel > h || kernel > w) throw DimensionError(kernel > h ? "H" : "W", "reference pool2d: kernel too large");
  const auto oh = (h - kernel) / stride + 1, ow = (w - kernel) / stride + 1;
  BasicTensor<T> out({n, c, oh, ow});
  auto dst = out.mutable_data();
  std::size_t flat = 0;
  for (std::int64_t p = 0; p < n * c; ++p) {
    for (std::int64_t y = 0; y < oh; ++y) {
      for (std::int64_t xx = 0; xx < ow; ++xx) {
        double acc = mode == PoolMode::max ? -INFINITY : 0.0;
        for (int a = 0; a < kernel; ++a) {
          for (int b = 0; b < kernel; ++b) {
            const double v = x[(p * h + y * stride + a) * w + xx * stride + b];
            acc = mode == PoolMode::max ? std::max(acc, v) : acc + v;
          }
        }
        dst[flat++] = static_cast<T>(mode == PoolMode::max ? acc : acc / (kernel * kernel));
      }
    }
  }
  return out;
}

template <class T>
BasicTensor<T> resize_nearest_to(const BasicTensor<T>& x, std::int64_t out_h, std::int64_t out_w) {
  const auto n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  BasicTensor<T> out({n, c, out_h, out_w});
  auto dst = out.mutable_data();
  std::size_t flat = 0;
  for (std::int64_t p = 0; p < n * c; ++p) {
    for (std::int64_t y = 0; y < out_h; ++y) {
      for (std::int64_t xx = 0; xx < out_w; ++xx) dst[flat++] = x[(p * h + y * h / out_h) * w + xx * w / out_w];
    }
  }
  return out;
}

template <class T>
BasicTensor<T> resize_bilinear(const BasicTensor<T>& x, int factor) {
  const auto n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const auto oh = h * factor, ow = w * factor;
  BasicTensor<T> out({n, c, oh, ow});
  auto dst = out.mutable_data();
  auto src_pos = [factor](std::int64_t o) { return std::max(0.0, (static_cast<double>(o) + 0.5) / factor - 0.5); };
  std::size_t flat = 0;
  for (std::int64_t p = 0; p < n * c; ++p) {
    for (std::int64_t y = 0; y < oh; ++y) {
      const double sy = src_pos(y);
      const std::int64_t y0 = std::min<std::int64_t>(static_cast<std::int64_t>(sy), h - 1);
      const std::int64_t y1 = std::min<std::int64_t>(y0 + 1, h - 1);
      const double fy = sy - static_cast<double>(y0);
      for (std::int64_t xx = 0; xx < ow; ++xx) {
        const double sx = src_pos(xx);
        const std::int64_t x0 = std::min<std::int64_t>(static_cast<std::int64_t>(sx), w - 1);
        const std::int64_t x1 = std::min<std::int64_t>(x0 + 1, w - 1);
        const double fx = sx - static_cast<double>(x0);
        auto at = [&](std::int64_t yy, std::int64_t xi) { return static_cast<double>(x[(p * h + yy) * w + xi]); };
        const double top = (1.0 - fx) * at(y0, x0) + fx * at(y0, x1);
        const double bot = (1.0 - fx) * at(y1, x0) + fx * at(y1, x1);
        dst[flat++] = static_cast<T>((1.0 - fy) * top + fy * bot);
      }
    }
  }
  return out;
}

template <class T>
BasicTensor<T> sample_bilinear_grid(const BasicTensor<T>& x, const BasicTensor<T>& coords) {
  const auto n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const auto oh = coords.dim(2), ow = coords.dim(3);
  BasicTensor<T> out({n, c, oh, ow});
  auto dst = out.mutable_data();
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t y = 0; y < oh; ++y) {
      for (std::int64_t xx = 0; xx < ow; ++xx) {
        const double u = coords[((b * 2) * oh + y) * ow + xx];
        const double v = coords[((b * 2 + 1) * oh + y) * ow + xx];
        if (!(u >= -1.0 && u <= 1.0 && v >= -1.0 && v <= 1.0)) {
          throw ContractError("reference sample_bilinear_grid: coordinate outside [-1, 1]");
        }
        const double px = (u + 1.0) * 0.5 * static_cast<double>(w - 1);
        const double py = (v + 1.0) * 0.5 * static_cast<double>(h - 1);
        const std::int64_t x0 = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor(px)), 0, w - 1);
        const std::int64_t y0 = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor(py)), 0, h - 1);
        const std::int64_t x1 = std::min<std::int64_t>(x0 + 1, w - 1);
        const std::int64_t y1 = std::min<std::int64_t>(y0 + 1, h - 1);
        const double fx = px - static_cast<double>(x0), fy = py - static_cast<double>(y0);
        for (std::int64_t ch = 0; ch < c; ++ch) {
          auto at = [&](std::int64_t yy, std::int64_t xi) {
            return static_cast<double>(x[((b * c + ch) * h + yy) * w + xi]);
          };
          const double top = (1.0 - fx) * at(y0, x0) + fx * at(y0, x1);
          const double bot = (1.0 - fx) * at(y1, x0) + fx * at(y1, x1);
          dst[static_cast<std::size_t>(((b * c + ch) * oh + y) * ow + xx)] = static_cast<T>((1.0 - fy) * top + fy * bot);
        }
      }
    }
  }
  return out;
}

template <class T>
BasicTensor<T> depth_to_space(const BasicTensor<T>& x, int r) {
  const auto n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (c % (r * r) != 0) throw DimensionError("C", "reference depth_to_space: channels not divisible");
  const auto oc = c / (r * r);
  BasicTensor<T> out({n, oc, h * r, w * r});
  auto dst = out.mutable_data();
  std::size_t flat = 0;
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t o = 0; o < oc; ++o) {
      for (std::int64_t y = 0; y < h * r; ++y) {
        for (std::int64_t xx = 0; xx < w * r; ++xx) {
          const std::int64_t ic = o * r * r + (y % r) * r + (xx % r);
          dst[flat++] = x[((b * c + ic) * h + y / r) * w + xx / r];
        }
      }
    }
  }
  return out;
}

#define DASSF_INSTANTIATE_REFERENCE(T)                                                             \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicConvParams<T>&);             \
  template BasicTensor<T> conv3d(const BasicTensor<T>&, const BasicConvParams<T>&);             \
  template BasicTensor<T> pool2d(const BasicTensor<T>&, PoolMode, int, int);                    \
  template BasicTensor<T> resize_nearest_to(const BasicTensor<T>&, std::int64_t, std::int64_t); \
  template BasicTensor<T> resize_bilinear(const BasicTensor<T>&, int);                          \
  template BasicTensor<T> sample_bilinear_grid(const BasicTensor<T>&, const BasicTensor<T>&);   \
  template BasicTensor<T> depth_to_space(const BasicTensor<T>&, int);

DASSF_INSTANTIATE_REFERENCE(float)
DASSF_INSTANTIATE_REFERENCE(double)

}  // namespace dassf::reference
