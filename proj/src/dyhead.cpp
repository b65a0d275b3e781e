#include "dassf/dyhead.hpp"

#include <string>

#include "contexts.hpp"

namespace dassf {
namespace {

template <class V>
LevelStackT<V> with_levels(const LevelStackT<V>& like, std::vector<V> levels) {
  LevelStackT<V> out;
  out.levels = std::move(levels);
  out.original_shapes = like.original_shapes;
  out.strides = like.strides;
  return out;
}

template <class Ctx>
void require_levels(Ctx& ctx, const LevelStackT<ValueOf<Ctx>>& f, const char* what) {
  if (f.levels.empty()) throw ParameterError(std::string(what) + ": empty level stack");
  const Shape& first = ctx.shape(f.levels.front());
  for (const auto& l : f.levels) {
    if (ctx.shape(l) != first) throw DimensionError("C", std::string(what) + ": levels differ in shape");
  }
}

}  // namespace

DyHeadParams make_dyhead_params(std::int64_t channels, int levels, Rng& rng, double stddev) {
  const std::int64_t hidden = std::max<std::int64_t>(1, channels / 4);
  DyHeadParams p;
  p.scale_fc.weight = random_normal<float>({1, 1, 1, 1}, rng, 0.0, stddev);
  p.scale_fc.bias = Tensor({1});
  p.offset_conv.weight = random_normal<float>({27, channels, 3, 3}, rng, 0.0, stddev);
  p.offset_conv.bias = Tensor({27});
  p.offset_conv.padding = {0, 1, 1};
  p.spatial_weight = Tensor({levels, kDeformTaps}, 1.0f / kDeformTaps);
  p.task_fc1.weight = random_normal<float>({hidden, channels, 1, 1}, rng, 0.0, stddev);
  p.task_fc1.bias = Tensor({hidden});
  p.task_fc2.weight = random_normal<float>({4 * channels, hidden, 1, 1}, rng, 0.0, stddev);
  p.task_fc2.bias = Tensor({4 * channels});
  return p;
}

template <class Ctx>
LevelStackT<ValueOf<Ctx>> make_level_stack(Ctx& ctx, const std::vector<ValueOf<Ctx>>& maps, std::vector<int> strides) {
  if (maps.empty()) throw ParameterError("make_level_stack: no levels");
  if (!strides.empty() && strides.size() != maps.size()) {
    throw ParameterError("make_level_stack: one stride per level required");
  }
  const Shape target = ctx.shape(maps[maps.size() / 2]);
  if (target.size() != 4) throw DimensionError("rank", "make_level_stack expects (N, C, H, W) maps");
  LevelStackT<ValueOf<Ctx>> stack;
  stack.strides = std::move(strides);
  for (const auto& m : maps) {
    const Shape& s = ctx.shape(m);
    if (s.size() != 4) throw DimensionError("rank", "make_level_stack expects (N, C, H, W) maps");
    if (s[0] != target[0]) throw DimensionError("N", "make_level_stack: batch sizes differ");
    if (s[1] != target[1]) throw DimensionError("C", "make_level_stack: channel counts differ");
    stack.original_shapes.push_back(s);
    stack.levels.push_back((s[2] == target[2] && s[3] == target[3]) ? m
                                                                     : ctx.resize_nearest_to(m, target[2], target[3]));
  }
  return stack;
}

template <class Ctx>
std::vector<ValueOf<Ctx>> unstack_levels(Ctx& ctx, const LevelStackT<ValueOf<Ctx>>& stack) {
  std::vector<ValueOf<Ctx>> out;
  for (std::size_t l = 0; l < stack.levels.size(); ++l) {
    const Shape& now = ctx.shape(stack.levels[l]);
    const Shape& orig = stack.original_shapes.at(l);
    out.push_back((now[2] == orig[2] && now[3] == orig[3]) ? stack.levels[l]
                                                           : ctx.resize_nearest_to(stack.levels[l], orig[2], orig[3]));
  }
  return out;
}

Tensor level_stack_lsc(const LevelStack& stack) {
  if (stack.levels.empty()) throw ParameterError("level_stack_lsc: empty level stack");
  const Shape& s = stack.levels.front().shape();
  const std::int64_t n = s[0], c = s[1], hw = s[2] * s[3];
  const auto l_count = static_cast<std::int64_t>(stack.levels.size());
  Tensor out({n, l_count, hw, c});
  auto d = out.mutable_data();
  for (std::int64_t l = 0; l < l_count; ++l) {
    const auto src = stack.levels[static_cast<std::size_t>(l)].data();
    for (std::int64_t b = 0; b < n; ++b)
      for (std::int64_t ch = 0; ch < c; ++ch)
        for (std::int64_t p = 0; p < hw; ++p)
          d[static_cast<std::size_t>(((b * l_count + l) * hw + p) * c + ch)] =
              src[static_cast<std::size_t>((b * c + ch) * hw + p)];
  }
  return out;
}

template <class Ctx>
LevelStackT<ValueOf<Ctx>> scale_attention(Ctx& ctx, const LevelStackT<ValueOf<Ctx>>& f,
                                          const DyHeadParamsT<ValueOf<Ctx>>& p) {
  require_levels(ctx, f, "scale_attention");
  const Shape& ws = ctx.shape(p.scale_fc.weight);
  if (ws != Shape{1, 1, 1, 1}) throw DimensionError("C", "scale_attention: fc must be (1, 1, 1, 1), got " + shape_str(ws));
  std::vector<ValueOf<Ctx>> out;
  for (const auto& level : f.levels) {
    auto m = ctx.reduce_mean(level, {1, 2, 3});
    auto a = ctx.activation(ctx.activation(ctx.conv2d(m, p.scale_fc), Activation::relu), Activation::hard_sigmoid);
    out.push_back(ctx.mul(level, a));
  }
  return with_levels(f, std::move(out));
}

template <class Ctx>
LevelStackT<ValueOf<Ctx>> spatial_attention_core(Ctx& ctx, const LevelStackT<ValueOf<Ctx>>& f,
                                                 const ValueOf<Ctx>& offsets, const ValueOf<Ctx>& masks,
                                                 const ValueOf<Ctx>& weights) {
  require_levels(ctx, f, "spatial_attention");
  auto agg = ctx.deform_aggregate(f.levels, offsets, masks, weights);
  return with_levels(f, std::vector<ValueOf<Ctx>>(f.levels.size(), agg));
}

template <class Ctx>
LevelStackT<ValueOf<Ctx>> spatial_attention(Ctx& ctx, const LevelStackT<ValueOf<Ctx>>& f,
                                            const DyHeadParamsT<ValueOf<Ctx>>& p) {
  require_levels(ctx, f, "spatial_attention");
  const Shape& s = ctx.shape(f.levels.front());
  if (s[2] < 3) throw DimensionError("H", "spatial_attention: grid must be at least 3x3, got " + shape_str(s));
  if (s[3] < 3) throw DimensionError("W", "spatial_attention: grid must be at least 3x3, got " + shape_str(s));
  const Shape& ws = ctx.shape(p.offset_conv.weight);
  if (ws.size() != 4 || ws[0] != 3 * kDeformTaps || ws[2] != 3 || ws[3] != 3) {
    throw DimensionError("C", "spatial_attention: offset conv must be (27, C, 3, 3), got " + shape_str(ws));
  }
  auto raw = ctx.conv2d(f.levels[f.levels.size() / 2], p.offset_conv);
  auto offsets = ctx.slice(raw, 1, 0, 2 * kDeformTaps);
  auto masks = ctx.activation(ctx.slice(raw, 1, 2 * kDeformTaps, kDeformTaps), Activation::sigmoid);
  return spatial_attention_core(ctx, f, offsets, masks, p.spatial_weight);
}

template <class Ctx>
LevelStackT<ValueOf<Ctx>> task_attention_apply(Ctx& ctx, const LevelStackT<ValueOf<Ctx>>& f,
                                               const ValueOf<Ctx>& coeffs) {
  require_levels(ctx, f, "task_attention");
  const std::int64_t c = ctx.shape(f.levels.front())[1];
  const Shape& cs = ctx.shape(coeffs);
  if (cs.size() != 4 || cs[1] != 4 * c || cs[2] != 1 || cs[3] != 1) {
    throw DimensionError("C", "task_attention: coefficients must be (N, 4C, 1, 1), got " + shape_str(cs));
  }
  auto a1 = ctx.slice(coeffs, 1, 0, c);
  auto a2 = ctx.slice(coeffs, 1, c, c);
  auto b1 = ctx.slice(coeffs, 1, 2 * c, c);
  auto b2 = ctx.slice(coeffs, 1, 3 * c, c);
  std::vector<ValueOf<Ctx>> out;
  for (const auto& level : f.levels) {
    out.push_back(ctx.maximum(ctx.add(ctx.mul(level, a1), b1), ctx.add(ctx.mul(level, a2), b2)));
  }
  return with_levels(f, std::move(out));
}

template <class Ctx>
LevelStackT<ValueOf<Ctx>> task_attention(Ctx& ctx, const LevelStackT<ValueOf<Ctx>>& f,
                                         const DyHeadParamsT<ValueOf<Ctx>>& p) {
  require_levels(ctx, f, "task_attention");
  const std::int64_t c = ctx.shape(f.levels.front())[1];
  auto desc = ctx.reduce_mean(f.levels.front(), {2, 3});
  for (std::size_t l = 1; l < f.levels.size(); ++l) desc = ctx.add(desc, ctx.reduce_mean(f.levels[l], {2, 3}));
  desc = ctx.scale(desc, 1.0 / static_cast<double>(f.levels.size()));
  auto hidden = ctx.activation(ctx.conv2d(desc, p.task_fc1), Activation::relu);
  auto raw = ctx.conv2d(hidden, p.task_fc2);
  if (ctx.shape(raw)[1] != 4 * c) {
    throw DimensionError("C", "task_attention: fc2 must produce 4C = " + std::to_string(4 * c) + " outputs");
  }
  auto alphas = ctx.add_scalar(
      ctx.scale(ctx.activation(ctx.slice(raw, 1, 0, 2 * c), Activation::hard_sigmoid), 2.0), -1.0);
  auto betas = ctx.scale(ctx.slice(raw, 1, 2 * c, 2 * c), 0.1);
  return task_attention_apply(ctx, f, ctx.concat({alphas, betas}, 1));
}

template <class Ctx>
LevelStackT<ValueOf<Ctx>> dyhead_block(Ctx& ctx, const LevelStackT<ValueOf<Ctx>>& f,
                                       const DyHeadParamsT<ValueOf<Ctx>>& p) {
  if (p.block_count < 0) throw ParameterError("dyhead_block: block_count must be >= 0");
  LevelStackT<ValueOf<Ctx>> cur = f;
  for (int b = 0; b < p.block_count; ++b) {
    cur = task_attention(ctx, spatial_attention(ctx, scale_attention(ctx, cur, p), p), p);
  }
  return cur;
}

#define DASSF_INSTANTIATE_DYHEAD(Ctx)                                                                               \
  template LevelStackT<ValueOf<Ctx>> make_level_stack(Ctx&, const std::vector<ValueOf<Ctx>>&, std::vector<int>);   \
  template std::vector<ValueOf<Ctx>> unstack_levels(Ctx&, const LevelStackT<ValueOf<Ctx>>&);                      \
  template LevelStackT<ValueOf<Ctx>> scale_attention(Ctx&, const LevelStackT<ValueOf<Ctx>>&,                      \
                                                     const DyHeadParamsT<ValueOf<Ctx>>&);                         \
  template LevelStackT<ValueOf<Ctx>> spatial_attention(Ctx&, const LevelStackT<ValueOf<Ctx>>&,                    \
                                                       const DyHeadParamsT<ValueOf<Ctx>>&);                       \
  template LevelStackT<ValueOf<Ctx>> spatial_attention_core(Ctx&, const LevelStackT<ValueOf<Ctx>>&,               \
                                                            const ValueOf<Ctx>&, const ValueOf<Ctx>&,             \
                                                            const ValueOf<Ctx>&);                                 \
  template LevelStackT<ValueOf<Ctx>> task_attention(Ctx&, const LevelStackT<ValueOf<Ctx>>&,                       \
                                                    const DyHeadParamsT<ValueOf<Ctx>>&);                          \
  template LevelStackT<ValueOf<Ctx>> task_attention_apply(Ctx&, const LevelStackT<ValueOf<Ctx>>&,                 \
                                                          const ValueOf<Ctx>&);                                   \
  template LevelStackT<ValueOf<Ctx>> dyhead_block(Ctx&, const LevelStackT<ValueOf<Ctx>>&,                         \
                                                  const DyHeadParamsT<ValueOf<Ctx>>&);
DASSF_FOR_EACH_CONTEXT(DASSF_INSTANTIATE_DYHEAD)

}  // namespace dassf
