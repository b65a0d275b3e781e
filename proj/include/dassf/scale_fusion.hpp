#pragma once

// Neck fusion blocks: triple feature encoding (TFE), dynamic scale-sequence
// fusion (DSSFF) and the channel/position attention merge (CPAM).

#include <optional>
#include <vector>

#include "dassf/dysample.hpp"
#include "dassf/eager.hpp"

namespace dassf {

struct GaussianSpec {
  int kernel_size = 5;
  std::vector<double> sigmas{0.5, 1.0, 2.0};  // one per level, finest first

  /// Throws ParameterError unless the size is odd and positive and the sigmas
  /// are positive and strictly increasing.
  void validate() const;
};

/// Normalized ksize x ksize Gaussian (shape {ksize, ksize}).
TensorD gaussian_kernel(double sigma, int ksize);

/// Depthwise Gaussian blur of an (N, C, H, W) map with the sigma of `level`.
template <class Ctx>
ValueOf<Ctx> smooth(Ctx& ctx, const ValueOf<Ctx>& x, const GaussianSpec& g, int level);

/// Convolution with folded normalization, optionally followed by silu.
template <class V>
struct CbsT {
  ConvLayer<V> conv;
  bool silu = true;
};
using Cbs = CbsT<Tensor>;

template <class Ctx>
ValueOf<Ctx> cbs(Ctx& ctx, const ValueOf<Ctx>& x, const CbsT<ValueOf<Ctx>>& p);

template <class V>
struct TfeParamsT {
  CbsT<V> large, medium, small;  // channel alignment per branch
};
using TfeParams = TfeParamsT<Tensor>;

/// large (2H x 2W), medium (H x W), small (H/2 x W/2) -> (N, 3C, H, W) with
/// branch order large, medium, small.
template <class Ctx>
ValueOf<Ctx> tfe_fuse(Ctx& ctx, const ValueOf<Ctx>& large, const ValueOf<Ctx>& medium, const ValueOf<Ctx>& small,
                      const TfeParamsT<ValueOf<Ctx>>& p);

template <class V>
struct SsffParamsT {
  // Without upsampler parameters the level falls back to nearest resizing.
  std::optional<DySampleParamsT<V>> dysample_p4;  // scale 2
  std::optional<DySampleParamsT<V>> dysample_p5;  // scale 4
  ConvLayer<V> conv3d;                              // (C_out, C, 3, 1, 1), no bias
  V norm_scale;
  V norm_shift;
  GaussianSpec gaussian;
  double norm_eps = 1e-5;
};
using SsffParams = SsffParamsT<Tensor>;

/// Smooth, upsample p4/p5 to p3's grid, stack along depth (p3, p4, p5),
/// conv3d + instance norm + silu, squeeze depth: (N, C_out, H3, W3).
template <class Ctx>
ValueOf<Ctx> dssff_fuse(Ctx& ctx, const ValueOf<Ctx>& p3, const ValueOf<Ctx>& p4, const ValueOf<Ctx>& p5,
                        const SsffParamsT<ValueOf<Ctx>>& p);

/// Odd 1D kernel size for C channels, at least 3.
int eca_kernel_size(std::int64_t channels);

template <class V>
struct CpamParamsT {
  int channel_kernel = 3;
  ConvLayer<V> channel_conv;  // (1, 1, k, 1), pad k/2 along the channel axis
  ConvLayer<V> pos_h;         // (C, C, k, 1) over the height profile
  ConvLayer<V> pos_w;         // (C, C, 1, k) over the width profile
  std::optional<ConvLayer<V>> align;  // 1x1 on the DSSFF input when channel counts differ
};
using CpamParams = CpamParamsT<Tensor>;

/// x * sigmoid(conv1d over channels of the global average pool).
template <class Ctx>
ValueOf<Ctx> channel_attention(Ctx& ctx, const ValueOf<Ctx>& x, const ConvLayer<ValueOf<Ctx>>& conv);

/// x * a_h[h] * a_w[w] from the two axis-pooled profiles.
template <class Ctx>
ValueOf<Ctx> position_attention(Ctx& ctx, const ValueOf<Ctx>& x, const CpamParamsT<ValueOf<Ctx>>& p);

template <class Ctx>
ValueOf<Ctx> cpam_forward(Ctx& ctx, const ValueOf<Ctx>& tfe_out, const ValueOf<Ctx>& dssff_out,
                          const CpamParamsT<ValueOf<Ctx>>& p);

}  // namespace dassf
