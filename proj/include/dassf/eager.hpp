#pragma once

// Eager evaluation context. Composite blocks are written once against a
// context type that supplies the tensor-core operators; `Eager<T>` evaluates
// them immediately, `Tape` (autodiff.hpp) records them for differentiation.

#include <type_traits>
#include <vector>

#include "dassf/ops.hpp"

namespace dassf {

template <class T>
class Eager {
 public:
  using Value = BasicTensor<T>;

  Value constant(const TensorD& t) const {
    if constexpr (std::is_same_v<T, double>) {
      return t;
    } else {
      return t.template cast<T>();
    }
  }

  const Shape& shape(const Value& v) const { return v.shape(); }
  bool all_finite(const Value& v) const { return v.all_finite(); }

  Value conv2d(const Value& x, const ConvLayer<Value>& p) { return dassf::conv2d(x, p); }
  Value conv3d(const Value& x, const ConvLayer<Value>& p) { return dassf::conv3d(x, p); }
  Value pool2d(const Value& x, PoolMode mode, int kernel, int stride) { return dassf::pool2d(x, mode, kernel, stride); }
  Value resize_nearest_to(const Value& x, std::int64_t h, std::int64_t w) { return dassf::resize_nearest_to(x, h, w); }
  Value sample_bilinear_grid(const Value& x, const Value& coords) { return dassf::sample_bilinear_grid(x, coords); }
  Value depth_to_space(const Value& x, int r) { return dassf::depth_to_space(x, r); }
  Value space_to_depth(const Value& x, int r) { return dassf::space_to_depth(x, r); }
  Value activation(const Value& x, Activation kind) { return dassf::activation(x, kind); }
  Value reduce_mean(const Value& x, std::vector<int> axes) {
    return dassf::reduce_mean(x, std::span<const int>(axes));
  }
  Value add(const Value& a, const Value& b) { return dassf::add(a, b); }
  Value sub(const Value& a, const Value& b) { return dassf::sub(a, b); }
  Value mul(const Value& a, const Value& b) { return dassf::mul(a, b); }
  Value maximum(const Value& a, const Value& b) { return dassf::maximum(a, b); }
  Value scale(const Value& x, double f) { return dassf::scale(x, f); }
  Value add_scalar(const Value& x, double v) { return dassf::add_scalar(x, v); }
  Value clamp(const Value& x, double lo, double hi) { return dassf::clamp(x, lo, hi); }
  Value concat(const std::vector<Value>& parts, int axis) {
    return dassf::concat(std::span<const Value>(parts), axis);
  }
  Value slice(const Value& x, int axis, std::int64_t begin, std::int64_t count) {
    return dassf::slice(x, axis, begin, count);
  }
  Value reshape(const Value& x, Shape shape) { return x.reshape(std::move(shape)); }
  Value permute_channels(const Value& x, const std::vector<std::int64_t>& index) {
    return dassf::permute_channels(x, std::span<const std::int64_t>(index));
  }
  Value instance_norm(const Value& x, const Value& scale_v, const Value& shift, double eps) {
    return dassf::instance_norm(x, scale_v, shift, eps);
  }
  Value deform_aggregate(const std::vector<Value>& levels, const Value& offsets, const Value& masks,
                         const Value& weights) {
    return dassf::deform_aggregate(std::span<const Value>(levels), offsets, masks, weights);
  }
  Value sum(const Value& x) { return dassf::sum_all(x); }
};

template <class Ctx>
using ValueOf = typename Ctx::Value;

}  // namespace dassf
