#include "dassf/scale_fusion.hpp"

#include <cmath>
#include <string>

#include "contexts.hpp"

namespace dassf {
namespace {

template <class Ctx>
void require_same_channels(Ctx& ctx, const ValueOf<Ctx>& a, const ValueOf<Ctx>& b, const char* what) {
  if (ctx.shape(a)[1] != ctx.shape(b)[1]) {
    throw DimensionError("C", std::string(what) + ": channel counts differ, " + shape_str(ctx.shape(a)) + " vs " +
                                  shape_str(ctx.shape(b)));
  }
}

void require_ratio(const Shape& fine, const Shape& coarse, std::int64_t factor, const char* what) {
  if (fine.size() != 4 || coarse.size() != 4) throw DimensionError("rank", std::string(what) + ": expected rank-4 maps");
  if (fine[0] != coarse[0]) throw DimensionError("N", std::string(what) + ": batch sizes differ");
  if (fine[2] != coarse[2] * factor) {
    throw DimensionError("H", std::string(what) + ": expected a " + std::to_string(factor) + ":1 height ratio, got " +
                                  shape_str(fine) + " vs " + shape_str(coarse));
  }
  if (fine[3] != coarse[3] * factor) {
    throw DimensionError("W", std::string(what) + ": expected a " + std::to_string(factor) + ":1 width ratio, got " +
                                  shape_str(fine) + " vs " + shape_str(coarse));
  }
}

template <class Ctx>
ValueOf<Ctx> upsample(Ctx& ctx, const ValueOf<Ctx>& x, const std::optional<DySampleParamsT<ValueOf<Ctx>>>& p,
                      int factor) {
  if (p) {
    if (p->scale != factor) {
      throw ParameterError("dssff: upsampler scale " + std::to_string(p->scale) + " != required " +
                           std::to_string(factor));
    }
    return dysample_upsample(ctx, x, *p);
  }
  const Shape& s = ctx.shape(x);
  return ctx.resize_nearest_to(x, s[2] * factor, s[3] * factor);
}

template <class Ctx>
ValueOf<Ctx> depth_slot(Ctx& ctx, const ValueOf<Ctx>& x) {
  const Shape s = ctx.shape(x);
  return ctx.reshape(x, {s[0], s[1], 1, s[2], s[3]});
}

}  // namespace

void GaussianSpec::validate() const {
  if (kernel_size < 1 || kernel_size % 2 == 0) {
    throw ParameterError("gaussian: kernel size must be odd and positive, got " + std::to_string(kernel_size));
  }
  for (std::size_t i = 0; i < sigmas.size(); ++i) {
    if (!(sigmas[i] > 0.0)) throw ParameterError("gaussian: sigma must be > 0");
    if (i > 0 && !(sigmas[i] > sigmas[i - 1])) throw ParameterError("gaussian: sigmas must be strictly increasing");
  }
  if (!sigmas.empty()) gaussian_kernel(sigmas.front(), kernel_size);
}

TensorD gaussian_kernel(double sigma, int ksize) {
  if (!(sigma > 0.0)) throw ParameterError("gaussian_kernel: sigma must be > 0");
  if (ksize < 1 || ksize % 2 == 0) throw ParameterError("gaussian_kernel: ksize must be odd and positive");
  const int r = ksize / 2;
  TensorD k({ksize, ksize});
  auto d = k.mutable_data();
  double total = 0.0;
  for (int y = -r; y <= r; ++y) {
    for (int x = -r; x <= r; ++x) {
      const double v = std::exp(-static_cast<double>(x * x + y * y) / (2.0 * sigma * sigma));
      d[static_cast<std::size_t>((y + r) * ksize + x + r)] = v;
      total += v;
    }
  }
  for (double& v : d) v /= total;
  if (!(d[0] > 0.0)) {
    throw ParameterError("gaussian_kernel: sigma " + std::to_string(sigma) + " too small for size " +
                         std::to_string(ksize) + ", corner weights underflow");
  }
  return k;
}

template <class Ctx>
ValueOf<Ctx> smooth(Ctx& ctx, const ValueOf<Ctx>& x, const GaussianSpec& g, int level) {
  g.validate();
  if (level < 0 || level >= static_cast<int>(g.sigmas.size())) {
    throw ParameterError("smooth: level " + std::to_string(level) + " out of range");
  }
  const Shape& s = ctx.shape(x);
  if (s.size() != 4) throw DimensionError("rank", "smooth expects an (N, C, H, W) map");
  const std::int64_t c = s[1];
  const int k = g.kernel_size;
  const TensorD kernel = gaussian_kernel(g.sigmas[static_cast<std::size_t>(level)], k);
  TensorD w({c, 1, k, k});
  auto d = w.mutable_data();
  for (std::int64_t ch = 0; ch < c; ++ch) {
    std::copy(kernel.data().begin(), kernel.data().end(), d.begin() + ch * k * k);
  }
  ConvLayer<ValueOf<Ctx>> layer;
  layer.weight = ctx.constant(w);
  layer.padding = {0, k / 2, k / 2};
  layer.groups = static_cast<int>(c);
  return ctx.conv2d(x, layer);
}

template <class Ctx>
ValueOf<Ctx> cbs(Ctx& ctx, const ValueOf<Ctx>& x, const CbsT<ValueOf<Ctx>>& p) {
  auto y = ctx.conv2d(x, p.conv);
  return p.silu ? ctx.activation(y, Activation::silu) : y;
}

template <class Ctx>
ValueOf<Ctx> tfe_fuse(Ctx& ctx, const ValueOf<Ctx>& large, const ValueOf<Ctx>& medium, const ValueOf<Ctx>& small,
                      const TfeParamsT<ValueOf<Ctx>>& p) {
  require_ratio(ctx.shape(large), ctx.shape(medium), 2, "tfe_fuse large/medium");
  require_ratio(ctx.shape(medium), ctx.shape(small), 2, "tfe_fuse medium/small");
  auto l = cbs(ctx, large, p.large);
  auto m = cbs(ctx, medium, p.medium);
  auto s = cbs(ctx, small, p.small);
  require_same_channels(ctx, l, m, "tfe_fuse");
  require_same_channels(ctx, s, m, "tfe_fuse");
  auto down = ctx.scale(ctx.add(ctx.pool2d(l, PoolMode::max, 2, 2), ctx.pool2d(l, PoolMode::avg, 2, 2)), 0.5);
  const Shape& ms = ctx.shape(m);
  auto up = ctx.resize_nearest_to(s, ms[2], ms[3]);
  return ctx.concat({down, m, up}, 1);
}

template <class Ctx>
ValueOf<Ctx> dssff_fuse(Ctx& ctx, const ValueOf<Ctx>& p3, const ValueOf<Ctx>& p4, const ValueOf<Ctx>& p5,
                        const SsffParamsT<ValueOf<Ctx>>& p) {
  require_ratio(ctx.shape(p3), ctx.shape(p4), 2, "dssff_fuse p3/p4");
  require_ratio(ctx.shape(p3), ctx.shape(p5), 4, "dssff_fuse p3/p5");
  require_same_channels(ctx, p3, p4, "dssff_fuse");
  require_same_channels(ctx, p3, p5, "dssff_fuse");
  if (p.gaussian.sigmas.size() != 3) throw ParameterError("dssff_fuse: needs one gaussian sigma per level");
  const Shape& ws = ctx.shape(p.conv3d.weight);
  if (ws.size() != 5 || ws[2] != 3 || p.conv3d.padding[0] != 0) {
    throw DimensionError("D", "dssff_fuse: 3D kernel must span the 3 stacked levels without depth padding, got " +
                                  shape_str(ws));
  }
  auto s3 = smooth(ctx, p3, p.gaussian, 0);
  auto s4 = upsample(ctx, smooth(ctx, p4, p.gaussian, 1), p.dysample_p4, 2);
  auto s5 = upsample(ctx, smooth(ctx, p5, p.gaussian, 2), p.dysample_p5, 4);
  auto stacked = ctx.concat({depth_slot(ctx, s3), depth_slot(ctx, s4), depth_slot(ctx, s5)}, 2);
  auto fused = ctx.conv3d(stacked, p.conv3d);
  auto normed = ctx.activation(ctx.instance_norm(fused, p.norm_scale, p.norm_shift, p.norm_eps), Activation::silu);
  const Shape out = ctx.shape(normed);
  return ctx.reshape(normed, {out[0], out[1], out[3], out[4]});
}

int eca_kernel_size(std::int64_t channels) {
  if (channels < 1) throw ParameterError("eca_kernel_size: channels must be >= 1");
  const int t = static_cast<int>(std::abs(std::log2(static_cast<double>(channels)) / 2.0 + 0.5));
  const int k = t % 2 == 1 ? t : t + 1;
  return std::max(k, 3);
}

template <class Ctx>
ValueOf<Ctx> channel_attention(Ctx& ctx, const ValueOf<Ctx>& x, const ConvLayer<ValueOf<Ctx>>& conv) {
  const Shape s = ctx.shape(x);
  if (s.size() != 4) throw DimensionError("rank", "channel_attention expects an (N, C, H, W) map");
  const Shape& ws = ctx.shape(conv.weight);
  if (ws.size() != 4 || ws[0] != 1 || ws[1] != 1 || ws[3] != 1 || ws[2] % 2 == 0) {
    throw DimensionError("C", "channel_attention: kernel must be (1, 1, k, 1) with odd k, got " + shape_str(ws));
  }
  auto pooled = ctx.reshape(ctx.reduce_mean(x, {2, 3}), {s[0], 1, s[1], 1});
  auto weights = ctx.activation(ctx.conv2d(pooled, conv), Activation::sigmoid);
  return ctx.mul(x, ctx.reshape(weights, {s[0], s[1], 1, 1}));
}

template <class Ctx>
ValueOf<Ctx> position_attention(Ctx& ctx, const ValueOf<Ctx>& x, const CpamParamsT<ValueOf<Ctx>>& p) {
  if (ctx.shape(x).size() != 4) throw DimensionError("rank", "position_attention expects an (N, C, H, W) map");
  auto a_h = ctx.activation(ctx.conv2d(ctx.reduce_mean(x, {3}), p.pos_h), Activation::sigmoid);
  auto a_w = ctx.activation(ctx.conv2d(ctx.reduce_mean(x, {2}), p.pos_w), Activation::sigmoid);
  return ctx.mul(ctx.mul(x, a_h), a_w);
}

template <class Ctx>
ValueOf<Ctx> cpam_forward(Ctx& ctx, const ValueOf<Ctx>& tfe_out, const ValueOf<Ctx>& dssff_out,
                          const CpamParamsT<ValueOf<Ctx>>& p) {
  const Shape& a = ctx.shape(tfe_out);
  const Shape& b = ctx.shape(dssff_out);
  if (a.size() != 4 || b.size() != 4) throw DimensionError("rank", "cpam expects (N, C, H, W) maps");
  if (a[0] != b[0]) throw DimensionError("N", "cpam: batch sizes differ");
  if (a[2] != b[2]) throw DimensionError("H", "cpam: inputs differ in height, " + shape_str(a) + " vs " + shape_str(b));
  if (a[3] != b[3]) throw DimensionError("W", "cpam: inputs differ in width, " + shape_str(a) + " vs " + shape_str(b));
  auto u = channel_attention(ctx, tfe_out, p.channel_conv);
  auto d = p.align ? ctx.conv2d(dssff_out, *p.align) : dssff_out;
  require_same_channels(ctx, u, d, "cpam");
  return position_attention(ctx, ctx.add(u, d), p);
}

#define DASSF_INSTANTIATE_SCALE_FUSION(Ctx)                                                                      \
  template ValueOf<Ctx> smooth(Ctx&, const ValueOf<Ctx>&, const GaussianSpec&, int);                           \
  template ValueOf<Ctx> cbs(Ctx&, const ValueOf<Ctx>&, const CbsT<ValueOf<Ctx>>&);                             \
  template ValueOf<Ctx> tfe_fuse(Ctx&, const ValueOf<Ctx>&, const ValueOf<Ctx>&, const ValueOf<Ctx>&,          \
                                 const TfeParamsT<ValueOf<Ctx>>&);                                             \
  template ValueOf<Ctx> dssff_fuse(Ctx&, const ValueOf<Ctx>&, const ValueOf<Ctx>&, const ValueOf<Ctx>&,        \
                                   const SsffParamsT<ValueOf<Ctx>>&);                                          \
  template ValueOf<Ctx> channel_attention(Ctx&, const ValueOf<Ctx>&, const ConvLayer<ValueOf<Ctx>>&);          \
  template ValueOf<Ctx> position_attention(Ctx&, const ValueOf<Ctx>&, const CpamParamsT<ValueOf<Ctx>>&);       \
  template ValueOf<Ctx> cpam_forward(Ctx&, const ValueOf<Ctx>&, const ValueOf<Ctx>&, const CpamParamsT<ValueOf<Ctx>>&);
DASSF_FOR_EACH_CONTEXT(DASSF_INSTANTIATE_SCALE_FUSION)

}  // namespace dassf
