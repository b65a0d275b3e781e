#include <vector>

#include "dassf/ops.hpp"
#include "detail.hpp"

namespace dassf {
namespace {

// Convolution viewed as 3D: 2D inputs carry depth 1 and a depth-1 kernel.
struct ConvGeom {
  std::int64_t n, c, d, h, w;
  std::int64_t oc, icg, kd, kh, kw;
  std::int64_t od, oh, ow;
  int stride, pd, ph, pw, groups;
  bool volumetric;
};

template <class T>
ConvGeom conv_geom(const BasicTensor<T>& x, const BasicConvParams<T>& p, std::size_t rank, const char* op) {
  detail::require_rank(x, rank, op);
  if (p.weight.rank() != rank) {
    throw DimensionError("rank", std::string(op) + " weight must have rank " + std::to_string(rank) + ", got " +
                                     shape_str(p.weight.shape()));
  }
  if (p.groups < 1 || p.stride < 1) throw ParameterError(std::string(op) + ": stride and groups must be >= 1");
  for (int pad : p.padding) {
    if (pad < 0) throw ParameterError(std::string(op) + ": padding must be >= 0");
  }
  ConvGeom g{};
  g.volumetric = rank == 5;
  g.n = x.dim(0);
  g.c = x.dim(1);
  g.d = g.volumetric ? x.dim(2) : 1;
  g.h = x.dim(-2);
  g.w = x.dim(-1);
  g.oc = p.weight.dim(0);
  g.icg = p.weight.dim(1);
  g.kd = g.volumetric ? p.weight.dim(2) : 1;
  g.kh = p.weight.dim(-2);
  g.kw = p.weight.dim(-1);
  g.stride = p.stride;
  g.groups = p.groups;
  g.pd = g.volumetric ? p.padding[0] : 0;
  g.ph = p.padding[1];
  g.pw = p.padding[2];
  if (g.c % g.groups != 0) throw DimensionError("C", "input channels not divisible by groups");
  if (g.oc % g.groups != 0) throw DimensionError("C", "output channels not divisible by groups");
  if (g.icg * g.groups != g.c) {
    throw DimensionError("C", std::string(op) + ": input has " + std::to_string(g.c) + " channels, weight expects " +
                                  std::to_string(g.icg * g.groups));
  }
  if (p.bias && (p.bias->numel() != g.oc)) throw DimensionError("C", "bias length must equal output channels");
  auto check_axis = [&](const char* axis, std::int64_t extent, int pad, std::int64_t k) {
    if (extent + 2 * pad < k) {
      throw DimensionError(axis, std::string(op) + ": padded extent " + std::to_string(extent + 2 * pad) +
                                     " smaller than kernel " + std::to_string(k));
    }
  };
  if (g.volumetric) check_axis("D", g.d, g.pd, g.kd);
  check_axis("H", g.h, g.ph, g.kh);
  check_axis("W", g.w, g.pw, g.kw);
  g.od = (g.d + 2 * g.pd - g.kd) / g.stride + 1;
  g.oh = (g.h + 2 * g.ph - g.kh) / g.stride + 1;
  g.ow = (g.w + 2 * g.pw - g.kw) / g.stride + 1;
  return g;
}

Shape out_shape(const ConvGeom& g) {
  if (g.volumetric) return {g.n, g.oc, g.od, g.oh, g.ow};
  return {g.n, g.oc, g.oh, g.ow};
}

template <class T>
BasicTensor<T> conv_forward(const BasicTensor<T>& x, const BasicConvParams<T>& p, const ConvGeom& g) {
  BasicTensor<T> out(out_shape(g));
  auto dst = out.mutable_data();
  const T* src = x.data().data();
  const T* wt = p.weight.data().data();
  const T* bias = p.bias ? p.bias->data().data() : nullptr;
  const std::int64_t ocg = g.oc / g.groups;
  const std::int64_t in_plane = g.d * g.h * g.w;
  const std::int64_t out_plane = g.od * g.oh * g.ow;
  const std::int64_t ksize = g.kd * g.kh * g.kw;

#pragma omp parallel for collapse(2) schedule(static)
  for (std::int64_t n = 0; n < g.n; ++n) {
    for (std::int64_t oc = 0; oc < g.oc; ++oc) {
      const std::int64_t group = oc / ocg;
      std::vector<double> acc(static_cast<std::size_t>(out_plane), bias ? static_cast<double>(bias[oc]) : 0.0);
      for (std::int64_t icg = 0; icg < g.icg; ++icg) {
        const std::int64_t ic = group * g.icg + icg;
        const T* plane = src + (n * g.c + ic) * in_plane;
        const T* kernel = wt + (oc * g.icg + icg) * ksize;
        for (std::int64_t kd = 0; kd < g.kd; ++kd) {
          const auto dr = detail::valid_range(g.d, g.od, g.stride, g.pd, kd);
          for (std::int64_t kh = 0; kh < g.kh; ++kh) {
            const auto hr = detail::valid_range(g.h, g.oh, g.stride, g.ph, kh);
            for (std::int64_t kw = 0; kw < g.kw; ++kw) {
              const auto wr = detail::valid_range(g.w, g.ow, g.stride, g.pw, kw);
              const double k = kernel[(kd * g.kh + kh) * g.kw + kw];
              for (std::int64_t od = dr.lo; od < dr.hi; ++od) {
                const std::int64_t id = od * g.stride - g.pd + kd;
                for (std::int64_t oh = hr.lo; oh < hr.hi; ++oh) {
                  const std::int64_t ih = oh * g.stride - g.ph + kh;
                  const T* row = plane + (id * g.h + ih) * g.w;
                  double* arow = acc.data() + (od * g.oh + oh) * g.ow;
                  for (std::int64_t ow = wr.lo; ow < wr.hi; ++ow) {
                    arow[ow] += k * static_cast<double>(row[ow * g.stride - g.pw + kw]);
                  }
                }
              }
            }
          }
        }
      }
      T* o = dst.data() + (n * g.oc + oc) * out_plane;
      for (std::int64_t i = 0; i < out_plane; ++i) o[i] = static_cast<T>(acc[static_cast<std::size_t>(i)]);
    }
  }
  return out;
}

}  // namespace

template <class T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicConvParams<T>& p) {
  return conv_forward(x, p, conv_geom(x, p, 4, "conv2d"));
}

template <class T>
BasicTensor<T> conv3d(const BasicTensor<T>& x, const BasicConvParams<T>& p) {
  return conv_forward(x, p, conv_geom(x, p, 5, "conv3d"));
}

ConvGrads conv_backward(const TensorD& x, const BasicConvParams<double>& p, const TensorD& grad_out) {
  const ConvGeom g = conv_geom(x, p, p.weight.rank(), "conv_backward");
  if (grad_out.shape() != out_shape(g)) throw DimensionError("*", "conv_backward: gradient shape mismatch");

  ConvGrads grads;
  grads.input = TensorD(x.shape());
  grads.weight = TensorD(p.weight.shape());
  const double* src = x.data().data();
  const double* wt = p.weight.data().data();
  const double* go = grad_out.data().data();
  const std::int64_t ocg = g.oc / g.groups;
  const std::int64_t in_plane = g.d * g.h * g.w;
  const std::int64_t out_plane = g.od * g.oh * g.ow;
  const std::int64_t ksize = g.kd * g.kh * g.kw;

  if (p.bias) {
    grads.bias = TensorD(p.bias->shape());
    auto gb = grads.bias.mutable_data();
    for (std::int64_t oc = 0; oc < g.oc; ++oc) {
      double s = 0.0;
      for (std::int64_t n = 0; n < g.n; ++n) {
        const double* plane = go + (n * g.oc + oc) * out_plane;
        for (std::int64_t i = 0; i < out_plane; ++i) s += plane[i];
      }
      gb[static_cast<std::size_t>(oc)] = s;
    }
  }

  // Visits every (output position, input position) pair for one kernel tap.
  auto for_tap = [&](std::int64_t kd, std::int64_t kh, std::int64_t kw, auto&& fn) {
    const auto dr = detail::valid_range(g.d, g.od, g.stride, g.pd, kd);
    const auto hr = detail::valid_range(g.h, g.oh, g.stride, g.ph, kh);
    const auto wr = detail::valid_range(g.w, g.ow, g.stride, g.pw, kw);
    for (std::int64_t od = dr.lo; od < dr.hi; ++od) {
      const std::int64_t id = od * g.stride - g.pd + kd;
      for (std::int64_t oh = hr.lo; oh < hr.hi; ++oh) {
        const std::int64_t ih = oh * g.stride - g.ph + kh;
        for (std::int64_t ow = wr.lo; ow < wr.hi; ++ow) {
          const std::int64_t iw = ow * g.stride - g.pw + kw;
          fn((od * g.oh + oh) * g.ow + ow, (id * g.h + ih) * g.w + iw);
        }
      }
    }
  };

  auto gw = grads.weight.mutable_data();
#pragma omp parallel for schedule(static)
  for (std::int64_t oc = 0; oc < g.oc; ++oc) {
    const std::int64_t group = oc / ocg;
    for (std::int64_t icg = 0; icg < g.icg; ++icg) {
      const std::int64_t ic = group * g.icg + icg;
      for (std::int64_t kd = 0; kd < g.kd; ++kd) {
        for (std::int64_t kh = 0; kh < g.kh; ++kh) {
          for (std::int64_t kw = 0; kw < g.kw; ++kw) {
            double s = 0.0;
            for (std::int64_t n = 0; n < g.n; ++n) {
              const double* gplane = go + (n * g.oc + oc) * out_plane;
              const double* xplane = src + (n * g.c + ic) * in_plane;
              for_tap(kd, kh, kw, [&](std::int64_t o, std::int64_t i) { s += gplane[o] * xplane[i]; });
            }
            gw[static_cast<std::size_t>(((oc * g.icg + icg) * g.kd + kd) * g.kh * g.kw + kh * g.kw + kw)] = s;
          }
        }
      }
    }
  }

  auto gx = grads.input.mutable_data();
#pragma omp parallel for collapse(2) schedule(static)
  for (std::int64_t n = 0; n < g.n; ++n) {
    for (std::int64_t ic = 0; ic < g.c; ++ic) {
      const std::int64_t group = ic / g.icg;
      const std::int64_t icg = ic % g.icg;
      double* xplane = gx.data() + (n * g.c + ic) * in_plane;
      for (std::int64_t oc = group * ocg; oc < (group + 1) * ocg; ++oc) {
        const double* gplane = go + (n * g.oc + oc) * out_plane;
        const double* kernel = wt + (oc * g.icg + icg) * ksize;
        for (std::int64_t kd = 0; kd < g.kd; ++kd) {
          for (std::int64_t kh = 0; kh < g.kh; ++kh) {
            for (std::int64_t kw = 0; kw < g.kw; ++kw) {
              const double k = kernel[(kd * g.kh + kh) * g.kw + kw];
              for_tap(kd, kh, kw, [&](std::int64_t o, std::int64_t i) { xplane[i] += k * gplane[o]; });
            }
          }
        }
      }
    }
  }
  return grads;
}

template Tensor conv2d(const Tensor&, const ConvParams&);
template TensorD conv2d(const TensorD&, const BasicConvParams<double>&);
template Tensor conv3d(const Tensor&, const ConvParams&);
template TensorD conv3d(const TensorD&, const BasicConvParams<double>&);

}  // namespace dassf
