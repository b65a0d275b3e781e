#pragma once

// Tensor-core operators. Every kernel is templated on the storage type
// (float for inference, double for gradient checks) and accumulates in
// double. Heavy kernels are OpenMP-parallel over independent output planes,
// so results do not depend on the thread count.

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "dassf/tensor.hpp"

namespace dassf {

enum class PoolMode { max, avg };

enum class Activation { identity, relu, silu, sigmoid, hard_sigmoid };

/// Convolution weights plus geometry. `weight` is (out_c, in_c/groups, [kd,] kh, kw);
/// `padding` is (d, h, w) and 2D convolutions ignore the depth entry.
template <class V>
struct ConvLayer {
  V weight;
  std::optional<V> bias;
  int stride = 1;
  std::array<int, 3> padding{0, 0, 0};
  int groups = 1;
};

template <class T>
using BasicConvParams = ConvLayer<BasicTensor<T>>;
using ConvParams = BasicConvParams<float>;

/// Number of output channels / input channels expected by a conv layer.
template <class T>
std::int64_t conv_out_channels(const BasicConvParams<T>& p) {
  return p.weight.dim(0);
}
template <class T>
std::int64_t conv_in_channels(const BasicConvParams<T>& p) {
  return p.weight.dim(1) * p.groups;
}

template <class T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicConvParams<T>& p);
template <class T>
BasicTensor<T> conv3d(const BasicTensor<T>& x, const BasicConvParams<T>& p);

template <class T>
BasicTensor<T> pool2d(const BasicTensor<T>& x, PoolMode mode, int kernel, int stride);

/// Nearest resize to an explicit grid: source index = floor(dst * in / out).
template <class T>
BasicTensor<T> resize_nearest_to(const BasicTensor<T>& x, std::int64_t out_h, std::int64_t out_w);
template <class T>
BasicTensor<T> resize_nearest(const BasicTensor<T>& x, int factor);

/// Half-pixel bilinear resize with edge clamping.
template <class T>
BasicTensor<T> resize_bilinear(const BasicTensor<T>& x, int factor);

/// Bilinear sampling of x (N,C,H,W) at coords (N,2,H',W'); channel 0 of coords
/// is the normalized x (width) position and channel 1 the y position. Both must
/// lie in [-1, 1]; -1 and +1 are the centers of the first and last pixel.
template <class T>
BasicTensor<T> sample_bilinear_grid(const BasicTensor<T>& x, const BasicTensor<T>& coords);

/// (N, C*r*r, H, W) -> (N, C, H*r, W*r); input channel c*r*r + i*r + j lands on
/// output sub-position (i, j).
template <class T>
BasicTensor<T> depth_to_space(const BasicTensor<T>& x, int r);
template <class T>
BasicTensor<T> space_to_depth(const BasicTensor<T>& x, int r);

template <class T>
BasicTensor<T> activation(const BasicTensor<T>& x, Activation kind);

/// Mean over `axes`; reduced axes stay in the shape with extent 1.
template <class T>
BasicTensor<T> reduce_mean(const BasicTensor<T>& x, std::span<const int> axes);
template <class T>
BasicTensor<T> reduce_mean(const BasicTensor<T>& x, std::initializer_list<int> axes) {
  return reduce_mean(x, std::span<const int>(axes.begin(), axes.size()));
}

/// Sum of all elements as a shape-{1} tensor.
template <class T>
BasicTensor<T> sum_all(const BasicTensor<T>& x);

// Broadcasting binary ops. Operands have equal rank; each axis either matches
// or has extent 1 on one side.
Shape broadcast_shape(const Shape& a, const Shape& b);
template <class T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <class T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <class T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <class T>
BasicTensor<T> maximum(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <class T>
BasicTensor<T> scale(const BasicTensor<T>& x, double factor);
template <class T>
BasicTensor<T> add_scalar(const BasicTensor<T>& x, double value);
template <class T>
BasicTensor<T> clamp(const BasicTensor<T>& x, double lo, double hi);

template <class T>
BasicTensor<T> concat(std::span<const BasicTensor<T>> parts, int axis);
template <class T>
BasicTensor<T> slice(const BasicTensor<T>& x, int axis, std::int64_t begin, std::int64_t count);

/// out[:, i] = x[:, index[i]] along axis 1.
template <class T>
BasicTensor<T> permute_channels(const BasicTensor<T>& x, std::span<const std::int64_t> index);

/// Per-(n, c) normalization over all trailing axes followed by a per-channel
/// affine map with `scale` and `shift` (both of length C).
template <class T>
BasicTensor<T> instance_norm(const BasicTensor<T>& x, const BasicTensor<T>& scale,
                             const BasicTensor<T>& shift, double eps);

inline constexpr int kDeformTaps = 9;

/// Modulated 3x3 deformable aggregation across levels:
///   out[n,c,h,w] = 1/L * sum_l sum_j weights[l,j] * F_l(n, c, h+ky_j+dy, w+kx_j+dx) * masks[n,j,h,w]
/// offsets are (N, 2K, H, W) with channel 2j = dy and 2j+1 = dx; samples
/// outside the map read zero.
template <class T>
BasicTensor<T> deform_aggregate(std::span<const BasicTensor<T>> levels, const BasicTensor<T>& offsets,
                                const BasicTensor<T>& masks, const BasicTensor<T>& weights);

// ---- Backward kernels (double precision only) ----

struct ConvGrads {
  TensorD input;
  TensorD weight;
  TensorD bias;  // null when the layer has no bias
};

/// Gradients of conv2d/conv3d (rank taken from the weight).
ConvGrads conv_backward(const TensorD& x, const BasicConvParams<double>& p, const TensorD& grad_out);

TensorD pool2d_backward(const TensorD& x, PoolMode mode, int kernel, int stride, const TensorD& grad_out);

TensorD resize_nearest_to_backward(const Shape& input_shape, const TensorD& grad_out);

struct GridSampleGrads {
  TensorD input;
  TensorD coords;
};
GridSampleGrads sample_bilinear_grid_backward(const TensorD& x, const TensorD& coords, const TensorD& grad_out);

TensorD activation_backward(const TensorD& x, Activation kind, const TensorD& grad_out);

/// Sum `grad` down to `shape` (inverse of broadcasting).
TensorD reduce_to_shape(const TensorD& grad, const Shape& shape);

struct NormGrads {
  TensorD input;
  TensorD scale;
  TensorD shift;
};
NormGrads instance_norm_backward(const TensorD& x, const TensorD& scale, double eps, const TensorD& grad_out);

struct DeformGrads {
  std::vector<TensorD> levels;
  TensorD offsets;
  TensorD masks;
  TensorD weights;
};
DeformGrads deform_aggregate_backward(std::span<const TensorD> levels, const TensorD& offsets,
                                      const TensorD& masks, const TensorD& weights, const TensorD& grad_out);

}  // namespace dassf
