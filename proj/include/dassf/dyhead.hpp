#pragma once

// Dynamic head attention over a stack of pyramid levels: scale-aware,
// spatial-aware (modulated 3x3 deformable sampling) and task-aware
// (per-channel max of two affine maps) attention, applied in that order.

#include <vector>

#include "dassf/eager.hpp"
#include "dassf/rng.hpp"

namespace dassf {

/// L pyramid levels resized to the median level's grid. Each entry of
/// `levels` is (N, C, H, W) with shared C, H, W, i.e. the stack is L x S x C
/// per batch item with S = H * W.
template <class V>
struct LevelStackT {
  std::vector<V> levels;
  std::vector<Shape> original_shapes;  // before resizing
  std::vector<int> strides;

  std::size_t size() const noexcept { return levels.size(); }
};
using LevelStack = LevelStackT<Tensor>;

template <class V>
struct DyHeadParamsT {
  ConvLayer<V> scale_fc;     // (1, 1, 1, 1) on the level mean
  ConvLayer<V> offset_conv;  // (27, C, 3, 3), padding 1: 18 offsets then 9 masks
  V spatial_weight;          // (L, 9) aggregation weight per level and tap
  ConvLayer<V> task_fc1;     // (C/4, C, 1, 1)
  ConvLayer<V> task_fc2;     // (4C, C/4, 1, 1): alpha1, alpha2, beta1, beta2
  int block_count = 2;
};
using DyHeadParams = DyHeadParamsT<Tensor>;

/// Random head parameters for `levels` levels of `channels` channels; the
/// spatial weights start at 1/9.
DyHeadParams make_dyhead_params(std::int64_t channels, int levels, Rng& rng, double stddev = 0.02);

/// Resizes every map (nearest) to the median level's grid; the median of L
/// levels is index L / 2.
template <class Ctx>
LevelStackT<ValueOf<Ctx>> make_level_stack(Ctx& ctx, const std::vector<ValueOf<Ctx>>& maps, std::vector<int> strides);

/// Resizes the levels back to their original grids.
template <class Ctx>
std::vector<ValueOf<Ctx>> unstack_levels(Ctx& ctx, const LevelStackT<ValueOf<Ctx>>& stack);

/// Dense (N, L, S, C) copy of a stack.
Tensor level_stack_lsc(const LevelStack& stack);

template <class Ctx>
LevelStackT<ValueOf<Ctx>> scale_attention(Ctx& ctx, const LevelStackT<ValueOf<Ctx>>& f,
                                          const DyHeadParamsT<ValueOf<Ctx>>& p);

template <class Ctx>
LevelStackT<ValueOf<Ctx>> spatial_attention(Ctx& ctx, const LevelStackT<ValueOf<Ctx>>& f,
                                            const DyHeadParamsT<ValueOf<Ctx>>& p);

/// Spatial attention with explicit offsets (N, 18, H, W), masks (N, 9, H, W)
/// already in [0, 1], and weights (L, 9). Every output level holds the same
/// level-averaged aggregate.
template <class Ctx>
LevelStackT<ValueOf<Ctx>> spatial_attention_core(Ctx& ctx, const LevelStackT<ValueOf<Ctx>>& f,
                                                 const ValueOf<Ctx>& offsets, const ValueOf<Ctx>& masks,
                                                 const ValueOf<Ctx>& weights);

template <class Ctx>
LevelStackT<ValueOf<Ctx>> task_attention(Ctx& ctx, const LevelStackT<ValueOf<Ctx>>& f,
                                         const DyHeadParamsT<ValueOf<Ctx>>& p);

/// Applies normalized coefficients (N, 4C, 1, 1) laid out alpha1, alpha2,
/// beta1, beta2: out = max(alpha1 * F + beta1, alpha2 * F + beta2).
template <class Ctx>
LevelStackT<ValueOf<Ctx>> task_attention_apply(Ctx& ctx, const LevelStackT<ValueOf<Ctx>>& f,
                                               const ValueOf<Ctx>& coeffs);

/// task(spatial(scale(F))), repeated p.block_count times.
template <class Ctx>
LevelStackT<ValueOf<Ctx>> dyhead_block(Ctx& ctx, const LevelStackT<ValueOf<Ctx>>& f,
                                       const DyHeadParamsT<ValueOf<Ctx>>& p);

}  // namespace dassf
