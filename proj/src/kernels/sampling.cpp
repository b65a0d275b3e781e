#include <cmath>
#include <vector>

#include "dassf/ops.hpp"
#include "detail.hpp"

namespace dassf {
namespace {

struct PoolGeom {
  std::int64_t n, c, h, w, oh, ow;
};

template <class T>
PoolGeom pool_geom(const BasicTensor<T>& x, int kernel, int stride) {
  detail::require_rank(x, 4, "pool2d");
  if (kernel < 1 || stride < 1) throw ParameterError("pool2d: kernel and stride must be >= 1");
  if (kernel > x.dim(2)) throw DimensionError("H", "pool2d: kernel " + std::to_string(kernel) + " exceeds height");
  if (kernel > x.dim(3)) throw DimensionError("W", "pool2d: kernel " + std::to_string(kernel) + " exceeds width");
  return {x.dim(0), x.dim(1), x.dim(2), x.dim(3), (x.dim(2) - kernel) / stride + 1, (x.dim(3) - kernel) / stride + 1};
}

// Bilinear taps of one sampling point in align-corners pixel space.
struct Taps {
  std::int64_t x0, x1, y0, y1;
  double wx, wy;
};

inline Taps align_corners_taps(double u, double v, std::int64_t h, std::int64_t w) {
  const double px = (u + 1.0) * 0.5 * static_cast<double>(w - 1);
  const double py = (v + 1.0) * 0.5 * static_cast<double>(h - 1);
  Taps t{};
  t.x0 = std::min<std::int64_t>(static_cast<std::int64_t>(std::floor(px)), w - 1);
  t.y0 = std::min<std::int64_t>(static_cast<std::int64_t>(std::floor(py)), h - 1);
  t.x0 = std::max<std::int64_t>(t.x0, 0);
  t.y0 = std::max<std::int64_t>(t.y0, 0);
  t.x1 = std::min<std::int64_t>(t.x0 + 1, w - 1);
  t.y1 = std::min<std::int64_t>(t.y0 + 1, h - 1);
  t.wx = px - static_cast<double>(t.x0);
  t.wy = py - static_cast<double>(t.y0);
  return t;
}

// Zero-padded bilinear taps around a pixel-space point; out-of-range corners
// get weight 0 and a clamped index.
struct ZeroTaps {
  std::int64_t idx[4];
  double wt[4];
  // Partial derivatives of the four corner weights with respect to y and x.
  double dwy[4];
  double dwx[4];
};

inline ZeroTaps zero_padded_taps(double py, double px, std::int64_t h, std::int64_t w) {
  ZeroTaps t{};
  if (!(py > -1.0 && py < static_cast<double>(h) && px > -1.0 && px < static_cast<double>(w))) return t;
  const std::int64_t y0 = static_cast<std::int64_t>(std::floor(py));
  const std::int64_t x0 = static_cast<std::int64_t>(std::floor(px));
  const double ly = py - static_cast<double>(y0);
  const double lx = px - static_cast<double>(x0);
  const std::int64_t ys[2] = {y0, y0 + 1};
  const std::int64_t xs[2] = {x0, x0 + 1};
  const double wy[2] = {1.0 - ly, ly};
  const double wx[2] = {1.0 - lx, lx};
  const double dy[2] = {-1.0, 1.0};
  for (int a = 0; a < 2; ++a) {
    for (int b = 0; b < 2; ++b) {
      const int k = a * 2 + b;
      const bool inside = ys[a] >= 0 && ys[a] < h && xs[b] >= 0 && xs[b] < w;
      if (!inside) continue;
      t.idx[k] = ys[a] * w + xs[b];
      t.wt[k] = wy[a] * wx[b];
      t.dwy[k] = dy[a] * wx[b];
      t.dwx[k] = wy[a] * dy[b];
    }
  }
  return t;
}

}  // namespace

template <class T>
BasicTensor<T> pool2d(const BasicTensor<T>& x, PoolMode mode, int kernel, int stride) {
  const PoolGeom g = pool_geom(x, kernel, stride);
  BasicTensor<T> out({g.n, g.c, g.oh, g.ow});
  auto dst = out.mutable_data();
  const T* src = x.data().data();
  const double inv = 1.0 / static_cast<double>(kernel * kernel);
#pragma omp parallel for collapse(2) schedule(static)
  for (std::int64_t n = 0; n < g.n; ++n) {
    for (std::int64_t c = 0; c < g.c; ++c) {
      const T* plane = src + (n * g.c + c) * g.h * g.w;
      T* o = dst.data() + (n * g.c + c) * g.oh * g.ow;
      for (std::int64_t oy = 0; oy < g.oh; ++oy) {
        for (std::int64_t ox = 0; ox < g.ow; ++ox) {
          double acc = mode == PoolMode::max ? -INFINITY : 0.0;
          for (int ky = 0; ky < kernel; ++ky) {
            const T* row = plane + (oy * stride + ky) * g.w + ox * stride;
            for (int kx = 0; kx < kernel; ++kx) {
              const double v = row[kx];
              if (mode == PoolMode::max) {
                if (v > acc) acc = v;
              } else {
                acc += v;
              }
            }
          }
          o[oy * g.ow + ox] = static_cast<T>(mode == PoolMode::max ? acc : acc * inv);
        }
      }
    }
  }
  return out;
}

TensorD pool2d_backward(const TensorD& x, PoolMode mode, int kernel, int stride, const TensorD& grad_out) {
  const PoolGeom g = pool_geom(x, kernel, stride);
  TensorD gx(x.shape());
  auto dst = gx.mutable_data();
  const double* src = x.data().data();
  const double* go = grad_out.data().data();
  const double inv = 1.0 / static_cast<double>(kernel * kernel);
#pragma omp parallel for collapse(2) schedule(static)
  for (std::int64_t n = 0; n < g.n; ++n) {
    for (std::int64_t c = 0; c < g.c; ++c) {
      const double* plane = src + (n * g.c + c) * g.h * g.w;
      double* gplane = dst.data() + (n * g.c + c) * g.h * g.w;
      const double* gop = go + (n * g.c + c) * g.oh * g.ow;
      for (std::int64_t oy = 0; oy < g.oh; ++oy) {
        for (std::int64_t ox = 0; ox < g.ow; ++ox) {
          const double gv = gop[oy * g.ow + ox];
          if (mode == PoolMode::avg) {
            for (int ky = 0; ky < kernel; ++ky) {
              for (int kx = 0; kx < kernel; ++kx) gplane[(oy * stride + ky) * g.w + ox * stride + kx] += gv * inv;
            }
            continue;
          }
          // First row-major maximum takes the gradient.
          std::int64_t best = (oy * stride) * g.w + ox * stride;
          for (int ky = 0; ky < kernel; ++ky) {
            for (int kx = 0; kx < kernel; ++kx) {
              const std::int64_t i = (oy * stride + ky) * g.w + ox * stride + kx;
              if (plane[i] > plane[best]) best = i;
            }
          }
          gplane[best] += gv;
        }
      }
    }
  }
  return gx;
}

template <class T>
BasicTensor<T> resize_nearest_to(const BasicTensor<T>& x, std::int64_t out_h, std::int64_t out_w) {
  detail::require_rank(x, 4, "resize_nearest");
  if (out_h < 1 || out_w < 1) throw ParameterError("resize_nearest: output extents must be >= 1");
  const std::int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  BasicTensor<T> out({n, c, out_h, out_w});
  auto dst = out.mutable_data();
  const T* src = x.data().data();
  std::vector<std::int64_t> col(static_cast<std::size_t>(out_w));
  for (std::int64_t ox = 0; ox < out_w; ++ox) col[static_cast<std::size_t>(ox)] = ox * w / out_w;
#pragma omp parallel for schedule(static)
  for (std::int64_t p = 0; p < n * c; ++p) {
    const T* plane = src + p * h * w;
    T* o = dst.data() + p * out_h * out_w;
    for (std::int64_t oy = 0; oy < out_h; ++oy) {
      const T* row = plane + (oy * h / out_h) * w;
      for (std::int64_t ox = 0; ox < out_w; ++ox) o[oy * out_w + ox] = row[col[static_cast<std::size_t>(ox)]];
    }
  }
  return out;
}

template <class T>
BasicTensor<T> resize_nearest(const BasicTensor<T>& x, int factor) {
  if (factor < 1) throw ParameterError("resize_nearest: factor must be >= 1, got " + std::to_string(factor));
  detail::require_rank(x, 4, "resize_nearest");
  return resize_nearest_to(x, x.dim(2) * factor, x.dim(3) * factor);
}

TensorD resize_nearest_to_backward(const Shape& input_shape, const TensorD& grad_out) {
  const std::int64_t n = input_shape[0], c = input_shape[1], h = input_shape[2], w = input_shape[3];
  const std::int64_t out_h = grad_out.dim(2), out_w = grad_out.dim(3);
  TensorD gx(input_shape);
  auto dst = gx.mutable_data();
  const double* go = grad_out.data().data();
#pragma omp parallel for schedule(static)
  for (std::int64_t p = 0; p < n * c; ++p) {
    double* plane = dst.data() + p * h * w;
    const double* g = go + p * out_h * out_w;
    for (std::int64_t oy = 0; oy < out_h; ++oy) {
      for (std::int64_t ox = 0; ox < out_w; ++ox) plane[(oy * h / out_h) * w + ox * w / out_w] += g[oy * out_w + ox];
    }
  }
  return gx;
}

template <class T>
BasicTensor<T> resize_bilinear(const BasicTensor<T>& x, int factor) {
  detail::require_rank(x, 4, "resize_bilinear");
  if (factor < 1) throw ParameterError("resize_bilinear: factor must be >= 1");
  const std::int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::int64_t oh = h * factor, ow = w * factor;
  auto axis_taps = [factor](std::int64_t o, std::int64_t extent, std::int64_t& i0, std::int64_t& i1, double& frac) {
    double src = (static_cast<double>(o) + 0.5) / factor - 0.5;
    if (src < 0.0) src = 0.0;
    i0 = std::min<std::int64_t>(static_cast<std::int64_t>(src), extent - 1);
    i1 = std::min<std::int64_t>(i0 + 1, extent - 1);
    frac = src - static_cast<double>(i0);
  };
  std::vector<std::int64_t> x0(static_cast<std::size_t>(ow)), x1(static_cast<std::size_t>(ow));
  std::vector<double> fx(static_cast<std::size_t>(ow));
  for (std::int64_t o = 0; o < ow; ++o) {
    const auto i = static_cast<std::size_t>(o);
    axis_taps(o, w, x0[i], x1[i], fx[i]);
  }
  BasicTensor<T> out({n, c, oh, ow});
  auto dst = out.mutable_data();
  const T* src = x.data().data();
#pragma omp parallel for schedule(static)
  for (std::int64_t p = 0; p < n * c; ++p) {
    const T* plane = src + p * h * w;
    T* o = dst.data() + p * oh * ow;
    for (std::int64_t oy = 0; oy < oh; ++oy) {
      std::int64_t y0, y1;
      double fy;
      axis_taps(oy, h, y0, y1, fy);
      for (std::int64_t ox = 0; ox < ow; ++ox) {
        const auto i = static_cast<std::size_t>(ox);
        const double top = (1.0 - fx[i]) * plane[y0 * w + x0[i]] + fx[i] * plane[y0 * w + x1[i]];
        const double bot = (1.0 - fx[i]) * plane[y1 * w + x0[i]] + fx[i] * plane[y1 * w + x1[i]];
        o[oy * ow + ox] = static_cast<T>((1.0 - fy) * top + fy * bot);
      }
    }
  }
  return out;
}

namespace {

template <class T>
void check_grid(const BasicTensor<T>& x, const BasicTensor<T>& coords) {
  detail::require_rank(x, 4, "sample_bilinear_grid");
  detail::require_rank(coords, 4, "sample_bilinear_grid coords");
  if (coords.dim(0) != x.dim(0)) throw DimensionError("N", "coords batch does not match input");
  if (coords.dim(1) != 2) throw DimensionError("C", "coords must have 2 channels (x, y)");
  for (T v : coords.data()) {
    if (!(v >= T(-1) && v <= T(1))) {
      throw ContractError("sample_bilinear_grid: coordinate " + std::to_string(static_cast<double>(v)) +
                          " outside [-1, 1]");
    }
  }
}

template <class T>
std::vector<Taps> grid_taps(const BasicTensor<T>& coords, std::int64_t h, std::int64_t w) {
  const std::int64_t n = coords.dim(0), oh = coords.dim(2), ow = coords.dim(3);
  const std::int64_t plane = oh * ow;
  std::vector<Taps> taps(static_cast<std::size_t>(n * plane));
  const T* cd = coords.data().data();
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t i = 0; i < plane; ++i) {
      taps[static_cast<std::size_t>(b * plane + i)] =
          align_corners_taps(cd[(b * 2) * plane + i], cd[(b * 2 + 1) * plane + i], h, w);
    }
  }
  return taps;
}

}  // namespace

template <class T>
BasicTensor<T> sample_bilinear_grid(const BasicTensor<T>& x, const BasicTensor<T>& coords) {
  check_grid(x, coords);
  const std::int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::int64_t oh = coords.dim(2), ow = coords.dim(3), plane = oh * ow;
  const std::vector<Taps> taps = grid_taps(coords, h, w);
  BasicTensor<T> out({n, c, oh, ow});
  auto dst = out.mutable_data();
  const T* src = x.data().data();
#pragma omp parallel for collapse(2) schedule(static)
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const T* in = src + (b * c + ch) * h * w;
      T* o = dst.data() + (b * c + ch) * plane;
      const Taps* t = taps.data() + b * plane;
      for (std::int64_t i = 0; i < plane; ++i) {
        const Taps& k = t[i];
        const double top = (1.0 - k.wx) * in[k.y0 * w + k.x0] + k.wx * in[k.y0 * w + k.x1];
        const double bot = (1.0 - k.wx) * in[k.y1 * w + k.x0] + k.wx * in[k.y1 * w + k.x1];
        o[i] = static_cast<T>((1.0 - k.wy) * top + k.wy * bot);
      }
    }
  }
  return out;
}

GridSampleGrads sample_bilinear_grid_backward(const TensorD& x, const TensorD& coords, const TensorD& grad_out) {
  check_grid(x, coords);
  const std::int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::int64_t oh = coords.dim(2), ow = coords.dim(3), plane = oh * ow;
  const std::vector<Taps> taps = grid_taps(coords, h, w);
  GridSampleGrads grads{TensorD(x.shape()), TensorD(coords.shape())};
  auto gx = grads.input.mutable_data();
  auto gc = grads.coords.mutable_data();
  const double* src = x.data().data();
  const double* go = grad_out.data().data();

#pragma omp parallel for collapse(2) schedule(static)
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      double* gin = gx.data() + (b * c + ch) * h * w;
      const double* g = go + (b * c + ch) * plane;
      const Taps* t = taps.data() + b * plane;
      for (std::int64_t i = 0; i < plane; ++i) {
        const Taps& k = t[i];
        gin[k.y0 * w + k.x0] += g[i] * (1.0 - k.wy) * (1.0 - k.wx);
        gin[k.y0 * w + k.x1] += g[i] * (1.0 - k.wy) * k.wx;
        gin[k.y1 * w + k.x0] += g[i] * k.wy * (1.0 - k.wx);
        gin[k.y1 * w + k.x1] += g[i] * k.wy * k.wx;
      }
    }
  }

  const double sx = 0.5 * static_cast<double>(w - 1);
  const double sy = 0.5 * static_cast<double>(h - 1);
#pragma omp parallel for collapse(2) schedule(static)
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t i = 0; i < plane; ++i) {
      const Taps& k = taps[static_cast<std::size_t>(b * plane + i)];
      double du = 0.0, dv = 0.0;
      for (std::int64_t ch = 0; ch < c; ++ch) {
        const double* in = src + (b * c + ch) * h * w;
        const double g = go[(b * c + ch) * plane + i];
        const double v00 = in[k.y0 * w + k.x0], v01 = in[k.y0 * w + k.x1];
        const double v10 = in[k.y1 * w + k.x0], v11 = in[k.y1 * w + k.x1];
        du += g * ((1.0 - k.wy) * (v01 - v00) + k.wy * (v11 - v10));
        dv += g * ((1.0 - k.wx) * (v10 - v00) + k.wx * (v11 - v01));
      }
      gc[static_cast<std::size_t>((b * 2) * plane + i)] = du * sx;
      gc[static_cast<std::size_t>((b * 2 + 1) * plane + i)] = dv * sy;
    }
  }
  return grads;
}

namespace {

template <class T>
void check_deform(std::span<const BasicTensor<T>> levels, const BasicTensor<T>& offsets, const BasicTensor<T>& masks,
                  const BasicTensor<T>& weights) {
  if (levels.empty()) throw DimensionError("L", "deform_aggregate needs at least one level");
  const Shape& s = levels[0].shape();
  detail::require_rank(levels[0], 4, "deform_aggregate");
  for (const auto& l : levels) {
    if (l.shape() != s) throw DimensionError("L", "all levels must share one shape");
  }
  const Shape off{s[0], 2 * kDeformTaps, s[2], s[3]};
  const Shape msk{s[0], kDeformTaps, s[2], s[3]};
  if (offsets.shape() != off) throw DimensionError("C", "offsets must be " + shape_str(off));
  if (masks.shape() != msk) throw DimensionError("C", "masks must be " + shape_str(msk));
  const Shape wsh{static_cast<std::int64_t>(levels.size()), kDeformTaps};
  if (weights.shape() != wsh) throw DimensionError("L", "weights must be " + shape_str(wsh));
  if (!offsets.all_finite()) throw ContractError("deform_aggregate: non-finite offsets");
}

template <class T>
std::vector<ZeroTaps> deform_taps(const BasicTensor<T>& offsets, std::int64_t n, std::int64_t h, std::int64_t w) {
  const std::int64_t plane = h * w;
  std::vector<ZeroTaps> taps(static_cast<std::size_t>(n * kDeformTaps * plane));
  const T* od = offsets.data().data();
  for (std::int64_t b = 0; b < n; ++b) {
    for (int j = 0; j < kDeformTaps; ++j) {
      const int ky = j / 3 - 1, kx = j % 3 - 1;
      const T* dy = od + (b * 2 * kDeformTaps + 2 * j) * plane;
      const T* dx = dy + plane;
      for (std::int64_t y = 0; y < h; ++y) {
        for (std::int64_t x = 0; x < w; ++x) {
          const std::int64_t i = y * w + x;
          taps[static_cast<std::size_t>((b * kDeformTaps + j) * plane + i)] =
              zero_padded_taps(static_cast<double>(y + ky) + dy[i], static_cast<double>(x + kx) + dx[i], h, w);
        }
      }
    }
  }
  return taps;
}

}  // namespace

template <class T>
BasicTensor<T> deform_aggregate(std::span<const BasicTensor<T>> levels, const BasicTensor<T>& offsets,
                                const BasicTensor<T>& masks, const BasicTensor<T>& weights) {
  check_deform(levels, offsets, masks, weights);
  const Shape& s = levels[0].shape();
  const std::int64_t n = s[0], c = s[1], h = s[2], w = s[3], plane = h * w;
  const std::int64_t nl = static_cast<std::int64_t>(levels.size());
  const std::vector<ZeroTaps> taps = deform_taps(offsets, n, h, w);
  const T* md = masks.data().data();
  const T* wd = weights.data().data();
  const double inv_l = 1.0 / static_cast<double>(nl);
  BasicTensor<T> out(s);
  auto dst = out.mutable_data();
#pragma omp parallel for collapse(2) schedule(static)
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      std::vector<double> acc(static_cast<std::size_t>(plane), 0.0);
      for (std::int64_t l = 0; l < nl; ++l) {
        const T* in = levels[static_cast<std::size_t>(l)].data().data() + (b * c + ch) * plane;
        for (int j = 0; j < kDeformTaps; ++j) {
          const double wt = wd[l * kDeformTaps + j];
          const ZeroTaps* t = taps.data() + (b * kDeformTaps + j) * plane;
          const T* m = md + (b * kDeformTaps + j) * plane;
          for (std::int64_t i = 0; i < plane; ++i) {
            const ZeroTaps& k = t[i];
            const double v = k.wt[0] * in[k.idx[0]] + k.wt[1] * in[k.idx[1]] + k.wt[2] * in[k.idx[2]] +
                             k.wt[3] * in[k.idx[3]];
            acc[static_cast<std::size_t>(i)] += wt * v * static_cast<double>(m[i]);
          }
        }
      }
      T* o = dst.data() + (b * c + ch) * plane;
      for (std::int64_t i = 0; i < plane; ++i) o[i] = static_cast<T>(acc[static_cast<std::size_t>(i)] * inv_l);
    }
  }
  return out;
}

DeformGrads deform_aggregate_backward(std::span<const TensorD> levels, const TensorD& offsets, const TensorD& masks,
                                      const TensorD& weights, const TensorD& grad_out) {
  check_deform(levels, offsets, masks, weights);
  const Shape& s = levels[0].shape();
  const std::int64_t n = s[0], c = s[1], h = s[2], w = s[3], plane = h * w;
  const std::int64_t nl = static_cast<std::int64_t>(levels.size());
  const std::vector<ZeroTaps> taps = deform_taps(offsets, n, h, w);
  const double* md = masks.data().data();
  const double* wd = weights.data().data();
  const double* go = grad_out.data().data();
  const double inv_l = 1.0 / static_cast<double>(nl);

  auto sample = [](const double* in, const ZeroTaps& k) {
    return k.wt[0] * in[k.idx[0]] + k.wt[1] * in[k.idx[1]] + k.wt[2] * in[k.idx[2]] + k.wt[3] * in[k.idx[3]];
  };

  DeformGrads grads;
  grads.offsets = TensorD(offsets.shape());
  grads.masks = TensorD(masks.shape());
  grads.weights = TensorD(weights.shape());
  for (std::int64_t l = 0; l < nl; ++l) grads.levels.emplace_back(s);

  for (std::int64_t l = 0; l < nl; ++l) {
    auto gl = grads.levels[static_cast<std::size_t>(l)].mutable_data();
#pragma omp parallel for collapse(2) schedule(static)
    for (std::int64_t b = 0; b < n; ++b) {
      for (std::int64_t ch = 0; ch < c; ++ch) {
        double* gin = gl.data() + (b * c + ch) * plane;
        const double* g = go + (b * c + ch) * plane;
        for (int j = 0; j < kDeformTaps; ++j) {
          const double wt = wd[l * kDeformTaps + j] * inv_l;
          const ZeroTaps* t = taps.data() + (b * kDeformTaps + j) * plane;
          const double* m = md + (b * kDeformTaps + j) * plane;
          for (std::int64_t i = 0; i < plane; ++i) {
            const double f = g[i] * wt * m[i];
            for (int q = 0; q < 4; ++q) gin[t[i].idx[q]] += f * t[i].wt[q];
          }
        }
      }
    }
  }

  auto gm = grads.masks.mutable_data();
  auto goff = grads.offsets.mutable_data();
#pragma omp parallel for collapse(2) schedule(static)
  for (std::int64_t b = 0; b < n; ++b) {
    for (int j = 0; j < kDeformTaps; ++j) {
      const ZeroTaps* t = taps.data() + (b * kDeformTaps + j) * plane;
      const double* m = md + (b * kDeformTaps + j) * plane;
      for (std::int64_t i = 0; i < plane; ++i) {
        const ZeroTaps& k = t[i];
        double dm = 0.0, dy = 0.0, dx = 0.0;
        for (std::int64_t l = 0; l < nl; ++l) {
          const double wt = wd[l * kDeformTaps + j] * inv_l;
          for (std::int64_t ch = 0; ch < c; ++ch) {
            const double* in = levels[static_cast<std::size_t>(l)].data().data() + (b * c + ch) * plane;
            const double g = go[(b * c + ch) * plane + i] * wt;
            dm += g * sample(in, k);
            double sy = 0.0, sx = 0.0;
            for (int q = 0; q < 4; ++q) {
              sy += k.dwy[q] * in[k.idx[q]];
              sx += k.dwx[q] * in[k.idx[q]];
            }
            dy += g * m[i] * sy;
            dx += g * m[i] * sx;
          }
        }
        gm[static_cast<std::size_t>((b * kDeformTaps + j) * plane + i)] = dm;
        goff[static_cast<std::size_t>((b * 2 * kDeformTaps + 2 * j) * plane + i)] = dy;
        goff[static_cast<std::size_t>((b * 2 * kDeformTaps + 2 * j + 1) * plane + i)] = dx;
      }
    }
  }

  auto gw = grads.weights.mutable_data();
#pragma omp parallel for collapse(2) schedule(static)
  for (std::int64_t l = 0; l < nl; ++l) {
    for (int j = 0; j < kDeformTaps; ++j) {
      double s_acc = 0.0;
      for (std::int64_t b = 0; b < n; ++b) {
        const ZeroTaps* t = taps.data() + (b * kDeformTaps + j) * plane;
        const double* m = md + (b * kDeformTaps + j) * plane;
        for (std::int64_t ch = 0; ch < c; ++ch) {
          const double* in = levels[static_cast<std::size_t>(l)].data().data() + (b * c + ch) * plane;
          const double* g = go + (b * c + ch) * plane;
          for (std::int64_t i = 0; i < plane; ++i) s_acc += g[i] * m[i] * sample(in, t[i]);
        }
      }
      gw[static_cast<std::size_t>(l * kDeformTaps + j)] = s_acc * inv_l;
    }
  }
  return grads;
}

#define DASSF_INSTANTIATE_SAMPLING(T)                                                                       \
  template BasicTensor<T> pool2d(const BasicTensor<T>&, PoolMode, int, int);                              \
  template BasicTensor<T> resize_nearest_to(const BasicTensor<T>&, std::int64_t, std::int64_t);            \
  template BasicTensor<T> resize_nearest(const BasicTensor<T>&, int);                                     \
  template BasicTensor<T> resize_bilinear(const BasicTensor<T>&, int);                                    \
  template BasicTensor<T> sample_bilinear_grid(const BasicTensor<T>&, const BasicTensor<T>&);             \
  template BasicTensor<T> deform_aggregate(std::span<const BasicTensor<T>>, const BasicTensor<T>&,        \
                                           const BasicTensor<T>&, const BasicTensor<T>&);

DASSF_INSTANTIATE_SAMPLING(float)
DASSF_INSTANTIATE_SAMPLING(double)

}  // namespace dassf
