#include "dassf/dysample.hpp"

#include <algorithm>
#include <cmath>

#include "contexts.hpp"

namespace dassf {
namespace {

// Scale from source pixel index to the normalized [-1, 1] range; a single
// pixel maps to 0.
double norm_factor(std::int64_t extent) { return extent > 1 ? 2.0 / static_cast<double>(extent - 1) : 0.0; }
double norm_pixel(double p, std::int64_t extent) { return extent > 1 ? p * norm_factor(extent) - 1.0 : 0.0; }

// Initial sub-pixel positions in source pixel units, (1, 2gs^2, 1, 1).
TensorD initial_positions(int scale, int groups) {
  const std::int64_t ss = static_cast<std::int64_t>(scale) * scale;
  TensorD t({1, 2 * groups * ss, 1, 1});
  auto d = t.mutable_data();
  for (int g = 0; g < groups; ++g) {
    for (int i = 0; i < scale; ++i) {
      for (int j = 0; j < scale; ++j) {
        const std::size_t base = static_cast<std::size_t>(((g * ss) + i * scale + j) * 2);
        d[base] = (static_cast<double>(j) - 0.5 * (scale - 1)) / scale;
        d[base + 1] = (static_cast<double>(i) - 0.5 * (scale - 1)) / scale;
      }
    }
  }
  return t;
}

// Per-channel factor converting pixel offsets to normalized offsets.
TensorD normalizers(int scale, int groups, std::int64_t h, std::int64_t w) {
  const std::int64_t c = 2LL * groups * scale * scale;
  TensorD t({1, c, 1, 1});
  auto d = t.mutable_data();
  for (std::int64_t k = 0; k < c; ++k) d[static_cast<std::size_t>(k)] = k % 2 == 0 ? norm_factor(w) : norm_factor(h);
  return t;
}

// Normalized source-pixel-center grid broadcast over all offset channels.
TensorD source_grid(int scale, int groups, std::int64_t h, std::int64_t w) {
  const std::int64_t c = 2LL * groups * scale * scale;
  TensorD t({1, c, h, w});
  auto d = t.mutable_data();
  for (std::int64_t k = 0; k < c; ++k) {
    for (std::int64_t y = 0; y < h; ++y) {
      for (std::int64_t x = 0; x < w; ++x) {
        d[static_cast<std::size_t>((k * h + y) * w + x)] =
            k % 2 == 0 ? norm_pixel(static_cast<double>(x), w) : norm_pixel(static_cast<double>(y), h);
      }
    }
  }
  return t;
}

// (group, sub-position, xy) -> (group, xy, sub-position), the block order depth_to_space expects.
std::vector<std::int64_t> shuffle_order(int scale, int groups) {
  const std::int64_t ss = static_cast<std::int64_t>(scale) * scale;
  std::vector<std::int64_t> index(static_cast<std::size_t>(2 * groups * ss));
  for (std::int64_t g = 0; g < groups; ++g) {
    for (std::int64_t xy = 0; xy < 2; ++xy) {
      for (std::int64_t k = 0; k < ss; ++k) {
        index[static_cast<std::size_t>((g * 2 + xy) * ss + k)] = (g * ss + k) * 2 + xy;
      }
    }
  }
  return index;
}

template <class Ctx>
void validate(Ctx& ctx, const ValueOf<Ctx>& x, const DySampleParamsT<ValueOf<Ctx>>& p) {
  if (p.scale < 1) throw ParameterError("dysample: scale must be >= 1");
  if (p.groups < 1) throw ParameterError("dysample: groups must be >= 1");
  const Shape& xs = ctx.shape(x);
  if (xs.size() != 4) throw DimensionError("rank", "dysample expects an (N, C, H, W) input");
  const Shape& ws = ctx.shape(p.offset_gen.weight);
  const std::int64_t expected = 2LL * p.groups * p.scale * p.scale;
  if (ws.size() != 4 || ws[0] != expected || ws[2] != 1 || ws[3] != 1) {
    throw DimensionError("C", "dysample offset generator must be 1x1 with " + std::to_string(expected) +
                                  " outputs, got " + shape_str(ws));
  }
  if (ws[1] * p.offset_gen.groups != xs[1]) {
    throw DimensionError("C", "dysample: input has " + std::to_string(xs[1]) + " channels, offset generator expects " +
                                  std::to_string(ws[1] * p.offset_gen.groups));
  }
  if (xs[1] % p.groups != 0) throw DimensionError("C", "dysample: channels not divisible by groups");
}

}  // namespace

DySampleParams make_dysample_params(std::int64_t channels, int scale, int groups, Rng& rng, double stddev) {
  DySampleParams p;
  p.scale = scale;
  p.groups = groups;
  const std::int64_t out = 2LL * groups * scale * scale;
  p.offset_gen.weight = random_normal<float>({out, channels, 1, 1}, rng, 0.0, stddev);
  p.offset_gen.bias = Tensor({out});
  return p;
}

TensorD make_init_grid(std::int64_t height, std::int64_t width, int scale) {
  if (height < 1 || width < 1 || scale < 1) throw ParameterError("make_init_grid: extents and scale must be >= 1");
  const std::int64_t oh = height * scale, ow = width * scale;
  TensorD grid({2, oh, ow});
  auto d = grid.mutable_data();
  for (std::int64_t y = 0; y < oh; ++y) {
    const double sy = (static_cast<double>(y) + 0.5) / scale - 0.5;
    for (std::int64_t x = 0; x < ow; ++x) {
      const double sx = (static_cast<double>(x) + 0.5) / scale - 0.5;
      d[static_cast<std::size_t>(y * ow + x)] = std::clamp(norm_pixel(sx, width), -1.0, 1.0);
      d[static_cast<std::size_t>((oh + y) * ow + x)] = std::clamp(norm_pixel(sy, height), -1.0, 1.0);
    }
  }
  return grid;
}

template <class Ctx>
ValueOf<Ctx> dysample_coordinates(Ctx& ctx, const ValueOf<Ctx>& x, const DySampleParamsT<ValueOf<Ctx>>& p) {
  validate(ctx, x, p);
  const Shape xs = ctx.shape(x);
  const std::int64_t h = xs[2], w = xs[3];
  auto raw = ctx.conv2d(x, p.offset_gen);
  if (!ctx.all_finite(raw)) throw ContractError("dysample: offset generator produced non-finite offsets");
  auto offsets = ctx.add(ctx.scale(raw, p.scope_factor), ctx.constant(initial_positions(p.scale, p.groups)));
  auto normalized = ctx.mul(offsets, ctx.constant(normalizers(p.scale, p.groups, h, w)));
  auto coords = ctx.add(normalized, ctx.constant(source_grid(p.scale, p.groups, h, w)));
  return ctx.clamp(coords, -1.0, 1.0);
}

template <class Ctx>
ValueOf<Ctx> dysample_upsample(Ctx& ctx, const ValueOf<Ctx>& x, const DySampleParamsT<ValueOf<Ctx>>& p) {
  auto coords = dysample_coordinates(ctx, x, p);
  const Shape xs = ctx.shape(x);
  const std::int64_t n = xs[0], c = xs[1], h = xs[2], w = xs[3];
  const std::int64_t s = p.scale, g = p.groups;
  auto planes = ctx.depth_to_space(ctx.permute_channels(coords, shuffle_order(p.scale, p.groups)), p.scale);
  auto grid = ctx.reshape(planes, {n * g, 2, s * h, s * w});
  auto grouped = ctx.reshape(x, {n * g, c / g, h, w});
  auto sampled = ctx.sample_bilinear_grid(grouped, grid);
  return ctx.reshape(sampled, {n, c, s * h, s * w});
}

std::int64_t dysample_param_count(std::int64_t channels, int scale, int groups, bool bias) {
  const std::int64_t out = 2LL * groups * scale * scale;
  return channels * out + (bias ? out : 0);
}

std::int64_t dysample_param_count(const DySampleParams& p) {
  return p.offset_gen.weight.numel() + (p.offset_gen.bias ? p.offset_gen.bias->numel() : 0);
}

#define DASSF_INSTANTIATE_DYSAMPLE(Ctx)                                                                   \
  template ValueOf<Ctx> dysample_coordinates(Ctx&, const ValueOf<Ctx>&, const DySampleParamsT<ValueOf<Ctx>>&); \
  template ValueOf<Ctx> dysample_upsample(Ctx&, const ValueOf<Ctx>&, const DySampleParamsT<ValueOf<Ctx>>&);
DASSF_FOR_EACH_CONTEXT(DASSF_INSTANTIATE_DYSAMPLE)

}  // namespace dassf
