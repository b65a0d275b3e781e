#include <gtest/gtest.h>

#include "dassf/scale_fusion.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace dassf;
using namespace dassf::support;

namespace {

Eager<float> ctx;

ConvParams identity_1x1(std::int64_t c) {
  Tensor w({c, c, 1, 1});
  for (std::int64_t i = 0; i < c; ++i) w.mutable_data()[i * c + i] = 1.0f;
  return conv_layer(w);
}

Cbs plain(ConvParams p) { return Cbs{std::move(p), false}; }

CpamParams zero_cpam(std::int64_t c, int k = 3) {
  CpamParams p;
  p.channel_kernel = k;
  p.channel_conv = conv_layer(Tensor({1, 1, k, 1}), Tensor({1}), 1, {0, k / 2, 0});
  p.pos_h = conv_layer(Tensor({c, c, 3, 1}), Tensor({c}), 1, {0, 1, 0});
  p.pos_w = conv_layer(Tensor({c, c, 1, 3}), Tensor({c}), 1, {0, 0, 1});
  return p;
}

SsffParams averaging_ssff(std::int64_t c, bool dynamic) {
  SsffParams p;
  Tensor w({c, c, 3, 1, 1});
  for (std::int64_t i = 0; i < c; ++i)
    for (int d = 0; d < 3; ++d) w.mutable_data()[(i * c + i) * 3 + d] = 1.0f / 3.0f;
  p.conv3d = conv_layer(w);
  p.norm_scale = Tensor({c}, 1.0f);
  p.norm_shift = Tensor({c}, 0.0f);
  if (dynamic) {
    for (int s : {2, 4}) {
      DySampleParams d;
      d.scale = s;
      d.groups = 2;
      d.offset_gen = conv_layer(Tensor({2LL * 2 * s * s, c, 1, 1}), Tensor({2LL * 2 * s * s}));
      (s == 2 ? p.dysample_p4 : p.dysample_p5) = d;
    }
  }
  return p;
}

Tensor transpose_hw(const Tensor& x) {
  const auto n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor t({n, c, w, h});
  auto d = t.mutable_data();
  for (std::int64_t a = 0; a < n; ++a)
    for (std::int64_t b = 0; b < c; ++b)
      for (std::int64_t i = 0; i < h; ++i)
        for (std::int64_t j = 0; j < w; ++j) d[((a * c + b) * w + j) * h + i] = x.at({a, b, i, j});
  return t;
}

}  // namespace

TEST(Gaussian, PositiveAndNormalized) {
  for (double sigma : {0.3, 0.5, 1.0, 2.0, 7.5}) {
    for (int k : {1, 3, 5, 7, 9}) {
      const TensorD g = gaussian_kernel(sigma, k);
      double s = 0.0;
      for (double v : g.data()) {
        EXPECT_GT(v, 0.0);
        s += v;
      }
      EXPECT_NEAR(s, 1.0, 1e-6);
    }
  }
}

TEST(Gaussian, DeltaAndFlatLimits) {
  const TensorD sharp = gaussian_kernel(0.05, 3);
  EXPECT_NEAR(sharp[4], 1.0, 1e-9);
  const TensorD flat = gaussian_kernel(100.0, 3);
  for (double v : flat.data()) EXPECT_NEAR(v, 1.0 / 9.0, 1e-3);
}

TEST(Gaussian, CenterWeightFallsWithSigma) {
  double prev = 1.0;
  for (double sigma : {0.5, 1.0, 2.0, 4.0}) {
    const double center = gaussian_kernel(sigma, 5)[12];
    EXPECT_LT(center, prev);
    prev = center;
  }
}

TEST(Gaussian, InvalidArgumentsFail) {
  EXPECT_THROW(gaussian_kernel(0.0, 3), ParameterError);
  EXPECT_THROW(gaussian_kernel(-1.0, 3), ParameterError);
  EXPECT_THROW(gaussian_kernel(1.0, 4), ParameterError);
  EXPECT_THROW(gaussian_kernel(1e-3, 3), ParameterError);
  EXPECT_THROW(gaussian_kernel(0.1, 11), ParameterError);
  EXPECT_THROW((GaussianSpec{5, {1.0, 0.5, 2.0}}.validate()), ParameterError);
  EXPECT_THROW((GaussianSpec{4, {0.5, 1.0, 2.0}}.validate()), ParameterError);
  EXPECT_THROW((GaussianSpec{11, {0.1, 1.0, 2.0}}.validate()), ParameterError);
  EXPECT_NO_THROW(GaussianSpec{}.validate());
}

TEST(Smooth, ConstantInteriorUnchanged) {
  const GaussianSpec g;
  const Tensor y = smooth(ctx, Tensor({1, 2, 9, 9}, 3.0f), g, 1);
  for (std::int64_t c = 0; c < 2; ++c)
    for (std::int64_t i = 2; i < 7; ++i)
      for (std::int64_t j = 2; j < 7; ++j) EXPECT_NEAR(y.at({0, c, i, j}), 3.0, 1e-6);
  EXPECT_LT(y.at({0, 0, 0, 0}), 3.0f);
}

TEST(Smooth, ImpulseGivesKernel) {
  const GaussianSpec g;
  Tensor x({1, 1, 9, 9});
  x.mutable_data()[4 * 9 + 4] = 1.0f;
  const Tensor y = smooth(ctx, x, g, 2);
  const TensorD k = gaussian_kernel(2.0, 5);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) EXPECT_NEAR(y.at({0, 0, 2 + i, 2 + j}), k.at({i, j}), 1e-7);
}

TEST(Smooth, MassInsideTheBorderIsPreserved) {
  Rng rng(1);
  const GaussianSpec g;
  Tensor x({1, 1, 20, 20});
  for (std::int64_t i = 2; i < 18; ++i)
    for (std::int64_t j = 2; j < 18; ++j) x.mutable_data()[i * 20 + j] = static_cast<float>(rng.uniform());
  const Tensor y = smooth(ctx, x, g, 0);
  EXPECT_NEAR(reduce_mean(y, {2, 3})[0], reduce_mean(x, {2, 3})[0], 1e-4);
}

TEST(Smooth, LevelOutOfRange) {
  EXPECT_THROW(smooth(ctx, Tensor({1, 1, 5, 5}), GaussianSpec{}, 3), ParameterError);
  EXPECT_THROW(smooth(ctx, Tensor({1, 1, 5, 5}), GaussianSpec{}, -1), ParameterError);
}

TEST(Tfe, ConstantInputsPropagate) {
  TfeParams p{plain(identity_1x1(3)), plain(identity_1x1(3)), plain(identity_1x1(3))};
  const Tensor y = tfe_fuse(ctx, Tensor({1, 3, 8, 8}, 0.75f), Tensor({1, 3, 4, 4}, 0.75f), Tensor({1, 3, 2, 2}, 0.75f), p);
  EXPECT_EQ(y, Tensor({1, 9, 4, 4}, 0.75f));
}

TEST(Tfe, LargeBranchAveragesMaxAndMeanPool) {
  Tensor large({1, 1, 4, 4});
  auto d = large.mutable_data();
  d[0] = 1;
  d[1] = 2;
  d[4] = 3;
  d[5] = 4;
  TfeParams p{plain(identity_1x1(1)), plain(identity_1x1(1)), plain(identity_1x1(1))};
  const Tensor y = tfe_fuse(ctx, large, Tensor({1, 1, 2, 2}), Tensor({1, 1, 1, 1}), p);
  EXPECT_FLOAT_EQ(y.at({0, 0, 0, 0}), 3.25f);
}

TEST(Tfe, AlignsChannelsAndKeepsMediumGrid) {
  Rng rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const auto h = 2 * draw_int(rng, 1, 4), w = 2 * draw_int(rng, 1, 4), c = draw_int(rng, 1, 4);
    TfeParams p{Cbs{conv_layer(rand_f({c, 2, 1, 1}, rng))}, Cbs{conv_layer(rand_f({c, 3, 3, 3}, rng), std::nullopt, 1, {0, 1, 1})},
                Cbs{conv_layer(rand_f({c, 5, 1, 1}, rng))}};
    const Tensor y = tfe_fuse(ctx, rand_f({1, 2, 2 * h, 2 * w}, rng), rand_f({1, 3, h, w}, rng),
                              rand_f({1, 5, h / 2, w / 2}, rng), p);
    EXPECT_EQ(y.shape(), (Shape{1, 3 * c, h, w}));
  }
}

TEST(Tfe, RatioViolationFails) {
  TfeParams p{plain(identity_1x1(1)), plain(identity_1x1(1)), plain(identity_1x1(1))};
  EXPECT_THROW(tfe_fuse(ctx, Tensor({1, 1, 6, 8}), Tensor({1, 1, 4, 4}), Tensor({1, 1, 2, 2}), p), DimensionError);
  EXPECT_THROW(tfe_fuse(ctx, Tensor({1, 1, 8, 8}), Tensor({1, 1, 4, 4}), Tensor({1, 1, 2, 1}), p), DimensionError);
}

TEST(Dssff, OutputKeepsFinestGrid) {
  Rng rng(3);
  for (bool dynamic : {true, false}) {
    SsffParams p = averaging_ssff(4, dynamic);
    p.conv3d = conv_layer(rand_f({6, 4, 3, 1, 1}, rng));
    p.norm_scale = Tensor({6}, 1.0f);
    p.norm_shift = Tensor({6}, 0.0f);
    const Tensor y = dssff_fuse(ctx, rand_f({1, 4, 12, 8}, rng), rand_f({1, 4, 6, 4}, rng), rand_f({1, 4, 3, 2}, rng), p);
    EXPECT_EQ(y.shape(), (Shape{1, 6, 12, 8}));
  }
}

TEST(Dssff, ZeroOffsetsReduceToPrimitiveComposition) {
  Rng rng(4);
  const GaussianSpec g;
  const Tensor p3 = rand_f({1, 4, 16, 16}, rng), p4 = rand_f({1, 4, 8, 8}, rng), p5 = rand_f({1, 4, 4, 4}, rng);
  const Tensor y = dssff_fuse(ctx, p3, p4, p5, averaging_ssff(4, true));

  const TensorD s3 = to_d(smooth(ctx, p3, g, 0));
  const TensorD s4 = oracle::bilinear_resize(to_d(smooth(ctx, p4, g, 1)), 2);
  const TensorD s5 = oracle::bilinear_resize(to_d(smooth(ctx, p5, g, 2)), 4);
  const TensorD mean = scale(add(add(s3, s4), s5), 1.0 / 3.0);
  const TensorD want =
      activation(instance_norm(mean, TensorD({4}, 1.0), TensorD({4}, 0.0), 1e-5), Activation::silu);
  EXPECT_LT(max_abs_diff(y, want), 1e-5);
}

TEST(Dssff, ConstantInputsGiveConstantInterior) {
  const Tensor y = dssff_fuse(ctx, Tensor({1, 2, 32, 32}, 0.5f), Tensor({1, 2, 16, 16}, 0.5f),
                              Tensor({1, 2, 8, 8}, 0.5f), averaging_ssff(2, true));
  // Rows and columns 12..19 are clear of the zero-padding reach of every level.
  for (std::int64_t c = 0; c < 2; ++c) {
    const float ref = y.at({0, c, 12, 12});
    for (std::int64_t i = 12; i < 20; ++i)
      for (std::int64_t j = 12; j < 20; ++j) EXPECT_NEAR(y.at({0, c, i, j}), ref, 1e-6);
  }
  EXPECT_TRUE(y.all_finite());
}

TEST(Dssff, RejectsBadRatiosAndKernels) {
  const SsffParams p = averaging_ssff(2, false);
  EXPECT_THROW(dssff_fuse(ctx, Tensor({1, 2, 8, 8}), Tensor({1, 2, 4, 4}), Tensor({1, 2, 4, 4}), p), DimensionError);
  EXPECT_THROW(dssff_fuse(ctx, Tensor({1, 2, 8, 8}), Tensor({1, 2, 3, 4}), Tensor({1, 2, 2, 2}), p), DimensionError);
  SsffParams bad = p;
  bad.conv3d = conv_layer(Tensor({2, 2, 2, 1, 1}));
  EXPECT_THROW(dssff_fuse(ctx, Tensor({1, 2, 8, 8}), Tensor({1, 2, 4, 4}), Tensor({1, 2, 2, 2}), bad), DimensionError);
}

TEST(Eca, KernelSizes) {
  EXPECT_EQ(eca_kernel_size(256), 5);
  EXPECT_EQ(eca_kernel_size(64), 3);
  EXPECT_EQ(eca_kernel_size(2), 3);
  EXPECT_EQ(eca_kernel_size(1), 3);
  for (std::int64_t c = 1; c <= 4096; c *= 2) {
    EXPECT_EQ(eca_kernel_size(c) % 2, 1);
    EXPECT_GE(eca_kernel_size(c), 3);
  }
}

TEST(ChannelAttention, ZeroConvHalves) {
  Rng rng(5);
  const Tensor x = rand_f({1, 5, 3, 4}, rng);
  const Tensor y = channel_attention(ctx, x, zero_cpam(5).channel_conv);
  EXPECT_LT(max_abs_diff(y, scale(x, 0.5)), 1e-7);
}

TEST(ChannelAttention, WeightsStrictlyBetweenZeroAndOne) {
  Rng rng(6);
  const Tensor x = rand_f({2, 6, 4, 4}, rng, 0.1, 2.0);
  const ConvParams conv = conv_layer(rand_f({1, 1, 3, 1}, rng, -3, 3), rand_f({1}, rng), 1, {0, 1, 0});
  const Tensor y = channel_attention(ctx, x, conv);
  for (std::int64_t n = 0; n < 2; ++n)
    for (std::int64_t c = 0; c < 6; ++c) {
      const double w = y.at({n, c, 0, 0}) / x.at({n, c, 0, 0});
      EXPECT_GT(w, 0.0);
      EXPECT_LT(w, 1.0);
      for (std::int64_t i = 0; i < 4; ++i)
        for (std::int64_t j = 0; j < 4; ++j) EXPECT_NEAR(y.at({n, c, i, j}), w * x.at({n, c, i, j}), 1e-6);
    }
}

TEST(ChannelAttention, KernelOneCommutesWithChannelPermutation) {
  Rng rng(7);
  const Tensor x = rand_f({1, 5, 3, 3}, rng);
  const ConvParams conv = conv_layer(rand_f({1, 1, 1, 1}, rng, -2, 2), rand_f({1}, rng));
  const std::vector<std::int64_t> perm = {3, 0, 4, 1, 2};
  const Tensor a = channel_attention(ctx, permute_channels(x, std::span<const std::int64_t>(perm)), conv);
  const Tensor b = permute_channels(channel_attention(ctx, x, conv), std::span<const std::int64_t>(perm));
  EXPECT_LT(max_abs_diff(a, b), 1e-7);
}

TEST(PositionAttention, ZeroConvsQuarter) {
  Rng rng(8);
  const Tensor x = rand_f({1, 3, 4, 6}, rng);
  EXPECT_LT(max_abs_diff(position_attention(ctx, x, zero_cpam(3)), scale(x, 0.25)), 1e-7);
}

TEST(PositionAttention, TransposeSymmetry) {
  Rng rng(9);
  CpamParams p = zero_cpam(3);
  const Tensor kern = rand_f({3, 3, 3, 1}, rng);
  const Tensor bias = rand_f({3}, rng);
  p.pos_h = conv_layer(kern, bias, 1, {0, 1, 0});
  p.pos_w = conv_layer(kern.reshape({3, 3, 1, 3}), bias, 1, {0, 0, 1});
  const Tensor x = rand_f({1, 3, 5, 7}, rng);
  EXPECT_LT(max_abs_diff(position_attention(ctx, transpose_hw(x), p), transpose_hw(position_attention(ctx, x, p))), 1e-6);
}

TEST(Cpam, ZeroedConvsCompose) {
  Rng rng(10);
  const Tensor t = rand_f({1, 4, 5, 5}, rng), d = rand_f({1, 4, 5, 5}, rng);
  const CpamParams p = zero_cpam(4);
  const Tensor y = cpam_forward(ctx, t, d, p);
  EXPECT_EQ(y.shape(), t.shape());
  EXPECT_LT(max_abs_diff(y, scale(add(scale(t, 0.5), d), 0.25)), 1e-6);
  EXPECT_LT(max_abs_diff(cpam_forward(ctx, t, Tensor(t.shape()), p), scale(t, 0.125)), 1e-6);
}

TEST(Cpam, AlignsDssffChannels) {
  Rng rng(11);
  CpamParams p = zero_cpam(4);
  p.align = conv_layer(rand_f({4, 6, 1, 1}, rng));
  const Tensor y = cpam_forward(ctx, rand_f({1, 4, 5, 5}, rng), rand_f({1, 6, 5, 5}, rng), p);
  EXPECT_EQ(y.shape(), (Shape{1, 4, 5, 5}));
}

TEST(Cpam, SpatialMismatchFails) {
  EXPECT_THROW(cpam_forward(ctx, Tensor({1, 4, 5, 5}), Tensor({1, 4, 5, 4}), zero_cpam(4)), DimensionError);
}

TEST(ScaleFusionProperty, AttentionNeverGrowsMagnitude) {
  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const auto c = draw_int(rng, 1, 6), h = draw_int(rng, 1, 7), w = draw_int(rng, 1, 7);
    const Tensor x = rand_f({1, c, h, w}, rng, -3, 3);
    CpamParams p = zero_cpam(c);
    p.channel_conv = conv_layer(rand_f({1, 1, 3, 1}, rng, -2, 2), rand_f({1}, rng), 1, {0, 1, 0});
    p.pos_h = conv_layer(rand_f({c, c, 3, 1}, rng, -2, 2), rand_f({c}, rng), 1, {0, 1, 0});
    p.pos_w = conv_layer(rand_f({c, c, 1, 3}, rng, -2, 2), rand_f({c}, rng), 1, {0, 0, 1});
    const Tensor a = channel_attention(ctx, x, p.channel_conv);
    const Tensor b = position_attention(ctx, x, p);
    for (std::int64_t i = 0; i < x.numel(); ++i) {
      EXPECT_LE(std::abs(a[i]), std::abs(x[i]));
      EXPECT_LE(std::abs(b[i]), std::abs(x[i]));
    }
  }
}

TEST(ScaleFusionProperty, TfeOutputHasThreeTimesChannels) {
  Rng rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    const auto c = draw_int(rng, 1, 5);
    TfeParams p{plain(identity_1x1(c)), plain(identity_1x1(c)), plain(identity_1x1(c))};
    const float v = static_cast<float>(rng.uniform(-2, 2));
    const Tensor y = tfe_fuse(ctx, Tensor({1, c, 8, 4}, v), Tensor({1, c, 4, 2}, v), Tensor({1, c, 2, 1}, v), p);
    EXPECT_EQ(y, Tensor({1, 3 * c, 4, 2}, v));
  }
}
