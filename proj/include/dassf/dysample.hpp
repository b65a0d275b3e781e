#pragma once

// Point-sampling dynamic upsampler with a static scope factor.
//
// A 1x1 offset generator predicts 2*g*s^2 offset planes from the input. The
// offsets are damped by the scope factor, shifted by each sub-pixel's initial
// position, added to the normalized source grid, clamped to [-1, 1], shuffled
// up to sH x sW and used to bilinearly sample each channel group.
//
// Offset channel layout is (group, sub-position, xy) with xy fastest:
// channel (gi * s*s + i*s + j) * 2 + xy holds the x (xy = 0) or y (xy = 1)
// offset of sub-position (i, j) in group gi, in source pixel units.

#include <cstdint>

#include "dassf/eager.hpp"
#include "dassf/rng.hpp"

namespace dassf {

template <class V>
struct DySampleParamsT {
  ConvLayer<V> offset_gen;  // 1x1, C -> 2*g*s^2
  int scale = 2;
  int groups = 4;
  double scope_factor = 0.25;
};

using DySampleParams = DySampleParamsT<Tensor>;

/// Offset-generator weights drawn from N(0, stddev) with zero bias.
DySampleParams make_dysample_params(std::int64_t channels, int scale, int groups, Rng& rng, double stddev = 0.001);

/// Sampling coordinates of a plain s-times bilinear resize, expressed in the
/// normalized source space: (2, sH, sW), channel 0 = x, channel 1 = y.
TensorD make_init_grid(std::int64_t height, std::int64_t width, int scale);

/// Clamped sampling coordinates after the offset, initial-position and grid
/// steps: (N, 2*g*s^2, H, W) in the channel layout documented above.
template <class Ctx>
ValueOf<Ctx> dysample_coordinates(Ctx& ctx, const ValueOf<Ctx>& x, const DySampleParamsT<ValueOf<Ctx>>& p);

/// (N, C, H, W) -> (N, C, sH, sW).
template <class Ctx>
ValueOf<Ctx> dysample_upsample(Ctx& ctx, const ValueOf<Ctx>& x, const DySampleParamsT<ValueOf<Ctx>>& p);

inline Tensor dysample_upsample(const Tensor& x, const DySampleParams& p) {
  Eager<float> ctx;
  return dysample_upsample(ctx, x, p);
}

/// Learned parameter count of the offset generator: C*2gs^2 (+ 2gs^2 with bias).
std::int64_t dysample_param_count(std::int64_t channels, int scale, int groups, bool bias);
std::int64_t dysample_param_count(const DySampleParams& p);

}  // namespace dassf
