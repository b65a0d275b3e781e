#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "dassf/ops.hpp"
#include "detail.hpp"

namespace dassf {
namespace {

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

inline double apply(Activation kind, double v) {
  switch (kind) {
    case Activation::identity:
      return v;
    case Activation::relu:
      return v > 0.0 ? v : 0.0;
    case Activation::silu:
      return v * sigmoid(v);
    case Activation::sigmoid:
      return sigmoid(v);
    case Activation::hard_sigmoid:
      return std::clamp((v + 1.0) * 0.5, 0.0, 1.0);
  }
  return v;
}

inline double derivative(Activation kind, double v) {
  switch (kind) {
    case Activation::identity:
      return 1.0;
    case Activation::relu:
      return v > 0.0 ? 1.0 : 0.0;
    case Activation::silu: {
      const double s = sigmoid(v);
      return s * (1.0 + v * (1.0 - s));
    }
    case Activation::sigmoid: {
      const double s = sigmoid(v);
      return s * (1.0 - s);
    }
    case Activation::hard_sigmoid:
      return (v > -1.0 && v < 1.0) ? 0.5 : 0.0;
  }
  return 1.0;
}

// Walks two broadcast operands in output order.
template <class T, class Fn>
BasicTensor<T> broadcast_binary(const BasicTensor<T>& a, const BasicTensor<T>& b, Fn fn) {
  const Shape out_shape = broadcast_shape(a.shape(), b.shape());
  const std::size_t rank = out_shape.size();
  const Shape sa = detail::strides_of(a.shape());
  const Shape sb = detail::strides_of(b.shape());
  Shape ea(rank), eb(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    ea[i] = a.shape()[i] == 1 ? 0 : sa[i];
    eb[i] = b.shape()[i] == 1 ? 0 : sb[i];
  }
  BasicTensor<T> out(out_shape);
  auto dst = out.mutable_data();
  const T* pa = a.data().data();
  const T* pb = b.data().data();
  std::vector<std::int64_t> idx(rank, 0);
  std::int64_t ia = 0, ib = 0;
  for (std::size_t flat = 0; flat < dst.size(); ++flat) {
    dst[flat] = static_cast<T>(fn(static_cast<double>(pa[ia]), static_cast<double>(pb[ib])));
    for (std::size_t d = rank; d-- > 0;) {
      ++idx[d];
      ia += ea[d];
      ib += eb[d];
      if (idx[d] < out_shape[d]) break;
      ia -= ea[d] * idx[d];
      ib -= eb[d] * idx[d];
      idx[d] = 0;
    }
  }
  return out;
}

template <class T, class Fn>
BasicTensor<T> unary(const BasicTensor<T>& x, Fn fn) {
  BasicTensor<T> out(x.shape());
  auto dst = out.mutable_data();
  auto src = x.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<T>(fn(static_cast<double>(src[i])));
  return out;
}

}  // namespace

Shape broadcast_shape(const Shape& a, const Shape& b) {
  if (a.size() != b.size()) {
    throw DimensionError("rank", "broadcast needs equal ranks: " + shape_str(a) + " vs " + shape_str(b));
  }
  Shape out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] != b[i] && a[i] != 1 && b[i] != 1) {
      throw DimensionError(axis_name(a.size(), i), "cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    }
    out[i] = std::max(a[i], b[i]);
  }
  return out;
}

template <class T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return broadcast_binary(a, b, [](double p, double q) { return p + q; });
}

template <class T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return broadcast_binary(a, b, [](double p, double q) { return p - q; });
}

template <class T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return broadcast_binary(a, b, [](double p, double q) { return p * q; });
}

template <class T>
BasicTensor<T> maximum(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return broadcast_binary(a, b, [](double p, double q) { return p >= q ? p : q; });
}

template <class T>
BasicTensor<T> scale(const BasicTensor<T>& x, double factor) {
  return unary(x, [factor](double v) { return v * factor; });
}

template <class T>
BasicTensor<T> add_scalar(const BasicTensor<T>& x, double value) {
  return unary(x, [value](double v) { return v + value; });
}

template <class T>
BasicTensor<T> clamp(const BasicTensor<T>& x, double lo, double hi) {
  if (lo > hi) throw ParameterError("clamp: lo > hi");
  return unary(x, [lo, hi](double v) { return std::clamp(v, lo, hi); });
}

template <class T>
BasicTensor<T> activation(const BasicTensor<T>& x, Activation kind) {
  return unary(x, [kind](double v) { return apply(kind, v); });
}

TensorD activation_backward(const TensorD& x, Activation kind, const TensorD& grad_out) {
  return mul(grad_out, unary(x, [kind](double v) { return derivative(kind, v); }));
}

template <class T>
BasicTensor<T> reduce_mean(const BasicTensor<T>& x, std::span<const int> axes) {
  const int rank = static_cast<int>(x.rank());
  std::set<int> reduced;
  for (int a : axes) {
    const int n = a < 0 ? a + rank : a;
    if (n < 0 || n >= rank) throw ParameterError("reduce_mean: axis " + std::to_string(a) + " invalid for rank " + std::to_string(rank));
    if (!reduced.insert(n).second) throw ParameterError("reduce_mean: duplicate axis " + std::to_string(a));
  }
  Shape out_shape = x.shape();
  std::int64_t count = 1;
  for (int a : reduced) {
    count *= out_shape[static_cast<std::size_t>(a)];
    out_shape[static_cast<std::size_t>(a)] = 1;
  }
  std::vector<double> acc(static_cast<std::size_t>(shape_numel(out_shape)), 0.0);
  const Shape os = detail::strides_of(out_shape);
  const std::size_t r = x.rank();
  std::vector<std::int64_t> idx(r, 0);
  auto src = x.data();
  for (std::size_t flat = 0; flat < src.size(); ++flat) {
    std::int64_t o = 0;
    for (std::size_t d = 0; d < r; ++d) o += (out_shape[d] == 1 ? 0 : idx[d]) * os[d];
    acc[static_cast<std::size_t>(o)] += static_cast<double>(src[flat]);
    for (std::size_t d = r; d-- > 0;) {
      if (++idx[d] < x.shape()[d]) break;
      idx[d] = 0;
    }
  }
  std::vector<T> values(acc.size());
  for (std::size_t i = 0; i < acc.size(); ++i) values[i] = static_cast<T>(acc[i] / static_cast<double>(count));
  return BasicTensor<T>(out_shape, std::move(values));
}

template <class T>
BasicTensor<T> sum_all(const BasicTensor<T>& x) {
  double s = 0.0;
  for (T v : x.data()) s += static_cast<double>(v);
  return BasicTensor<T>(Shape{1}, std::vector<T>{static_cast<T>(s)});
}

TensorD reduce_to_shape(const TensorD& grad, const Shape& shape) {
  if (grad.shape() == shape) return grad;
  if (grad.rank() != shape.size()) throw DimensionError("rank", "reduce_to_shape: rank mismatch");
  std::vector<int> axes;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] == 1 && grad.shape()[i] != 1) {
      axes.push_back(static_cast<int>(i));
    } else if (shape[i] != grad.shape()[i]) {
      throw DimensionError(axis_name(shape.size(), i), "reduce_to_shape: incompatible extents");
    }
  }
  std::int64_t count = 1;
  for (int a : axes) count *= grad.shape()[static_cast<std::size_t>(a)];
  return scale(reduce_mean(grad, std::span<const int>(axes)), static_cast<double>(count));
}

namespace {

struct NormStats {
  std::int64_t n, c, m;
  std::vector<double> mean, inv_std;
};

template <class T>
NormStats norm_stats(const BasicTensor<T>& x, const BasicTensor<T>& scale_v, double eps) {
  if (x.rank() < 3) throw DimensionError("rank", "instance_norm needs rank >= 3");
  NormStats s{x.dim(0), x.dim(1), x.numel() / (x.dim(0) * x.dim(1)), {}, {}};
  if (scale_v.numel() != s.c) throw DimensionError("C", "instance_norm: scale/shift length must equal channels");
  s.mean.resize(static_cast<std::size_t>(s.n * s.c));
  s.inv_std.resize(s.mean.size());
  const T* src = x.data().data();
  for (std::int64_t p = 0; p < s.n * s.c; ++p) {
    const T* v = src + p * s.m;
    double mu = 0.0;
    for (std::int64_t i = 0; i < s.m; ++i) mu += static_cast<double>(v[i]);
    mu /= static_cast<double>(s.m);
    double var = 0.0;
    for (std::int64_t i = 0; i < s.m; ++i) {
      const double d = static_cast<double>(v[i]) - mu;
      var += d * d;
    }
    var /= static_cast<double>(s.m);
    s.mean[static_cast<std::size_t>(p)] = mu;
    s.inv_std[static_cast<std::size_t>(p)] = 1.0 / std::sqrt(var + eps);
  }
  return s;
}

}  // namespace

template <class T>
BasicTensor<T> instance_norm(const BasicTensor<T>& x, const BasicTensor<T>& scale_v, const BasicTensor<T>& shift,
                             double eps) {
  const NormStats s = norm_stats(x, scale_v, eps);
  if (shift.numel() != s.c) throw DimensionError("C", "instance_norm: shift length must equal channels");
  BasicTensor<T> out(x.shape());
  auto dst = out.mutable_data();
  const T* src = x.data().data();
  for (std::int64_t p = 0; p < s.n * s.c; ++p) {
    const std::int64_t c = p % s.c;
    const double a = static_cast<double>(scale_v[c]) * s.inv_std[static_cast<std::size_t>(p)];
    const double mu = s.mean[static_cast<std::size_t>(p)];
    const double b = static_cast<double>(shift[c]);
    for (std::int64_t i = 0; i < s.m; ++i) {
      dst[static_cast<std::size_t>(p * s.m + i)] = static_cast<T>(a * (static_cast<double>(src[p * s.m + i]) - mu) + b);
    }
  }
  return out;
}

NormGrads instance_norm_backward(const TensorD& x, const TensorD& scale_v, double eps, const TensorD& grad_out) {
  const NormStats s = norm_stats(x, scale_v, eps);
  NormGrads g{TensorD(x.shape()), TensorD(scale_v.shape()), TensorD(scale_v.shape())};
  auto gx = g.input.mutable_data();
  auto gs = g.scale.mutable_data();
  auto gb = g.shift.mutable_data();
  const double* src = x.data().data();
  const double* go = grad_out.data().data();
  const double m = static_cast<double>(s.m);
  for (std::int64_t p = 0; p < s.n * s.c; ++p) {
    const std::int64_t c = p % s.c;
    const double mu = s.mean[static_cast<std::size_t>(p)];
    const double inv = s.inv_std[static_cast<std::size_t>(p)];
    double sum_g = 0.0, sum_gx = 0.0;
    for (std::int64_t i = 0; i < s.m; ++i) {
      const double xhat = (src[p * s.m + i] - mu) * inv;
      sum_g += go[p * s.m + i];
      sum_gx += go[p * s.m + i] * xhat;
    }
    gb[static_cast<std::size_t>(c)] += sum_g;
    gs[static_cast<std::size_t>(c)] += sum_gx;
    const double k = scale_v[c] * inv;
    for (std::int64_t i = 0; i < s.m; ++i) {
      const double xhat = (src[p * s.m + i] - mu) * inv;
      gx[static_cast<std::size_t>(p * s.m + i)] = k * (go[p * s.m + i] - sum_g / m - xhat * sum_gx / m);
    }
  }
  return g;
}

#define DASSF_INSTANTIATE_ELEMENTWISE(T)                                                                       \
  template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);                                 \
  template BasicTensor<T> sub(const BasicTensor<T>&, const BasicTensor<T>&);                                 \
  template BasicTensor<T> mul(const BasicTensor<T>&, const BasicTensor<T>&);                                 \
  template BasicTensor<T> maximum(const BasicTensor<T>&, const BasicTensor<T>&);                             \
  template BasicTensor<T> scale(const BasicTensor<T>&, double);                                              \
  template BasicTensor<T> add_scalar(const BasicTensor<T>&, double);                                         \
  template BasicTensor<T> clamp(const BasicTensor<T>&, double, double);                                      \
  template BasicTensor<T> activation(const BasicTensor<T>&, Activation);                                     \
  template BasicTensor<T> reduce_mean(const BasicTensor<T>&, std::span<const int>);                          \
  template BasicTensor<T> sum_all(const BasicTensor<T>&);                                                    \
  template BasicTensor<T> instance_norm(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&, \
                                        double);

DASSF_INSTANTIATE_ELEMENTWISE(float)
DASSF_INSTANTIATE_ELEMENTWISE(double)

}  // namespace dassf
