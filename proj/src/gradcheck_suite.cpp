#include "dassf/gradcheck_suite.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <memory>

#include "dassf/autodiff.hpp"
#include "dassf/dyhead.hpp"
#include "dassf/dysample.hpp"
#include "dassf/rng.hpp"
#include "dassf/scale_fusion.hpp"

namespace dassf {
namespace {

struct Case {
  std::string op;
  std::vector<TensorD> inputs;
  DiffFn fn;
};

using In = std::span<const Var>;

TensorD rnd(const Shape& s, Rng& rng, double lo = -1.0, double hi = 1.0) { return random_uniform<double>(s, rng, lo, hi); }

TensorD away_from(const Shape& s, Rng& rng, std::vector<double> kinks, double lo, double hi, double margin = 1e-3) {
  TensorD t(s);
  for (double& v : t.mutable_data()) {
    bool ok = false;
    while (!ok) {
      v = rng.uniform(lo, hi);
      ok = true;
      for (double k : kinks) ok = ok && std::abs(v - k) > margin;
    }
  }
  return t;
}

ConvLayer<Var> layer(Var w, Var b, int stride = 1, std::array<int, 3> pad = {0, 0, 0}, int groups = 1) {
  ConvLayer<Var> l;
  l.weight = w;
  l.bias = b;
  l.stride = stride;
  l.padding = pad;
  l.groups = groups;
  return l;
}

std::vector<Case> tensor_core_cases(Rng& rng) {
  std::vector<Case> cs;
  cs.push_back({"conv2d", {rnd({1, 4, 6, 6}, rng), rnd({6, 2, 3, 3}, rng), rnd({6}, rng)},
                [](Tape& t, In in) { return t.conv2d(in[0], layer(in[1], in[2], 2, {0, 1, 1}, 2)); }});
  cs.push_back({"conv3d", {rnd({1, 2, 3, 4, 4}, rng), rnd({3, 2, 3, 3, 3}, rng), rnd({3}, rng)},
                [](Tape& t, In in) { return t.conv3d(in[0], layer(in[1], in[2], 1, {1, 1, 1})); }});
  cs.push_back({"pool2d_avg", {rnd({1, 2, 6, 6}, rng)},
                [](Tape& t, In in) { return t.pool2d(in[0], PoolMode::avg, 2, 2); }});
  cs.push_back({"pool2d_max", {rnd({1, 2, 6, 6}, rng)},
                [](Tape& t, In in) { return t.pool2d(in[0], PoolMode::max, 3, 1); }});
  cs.push_back({"resize_nearest", {rnd({1, 2, 3, 3}, rng)},
                [](Tape& t, In in) { return t.resize_nearest_to(in[0], 6, 9); }});
  cs.push_back({"sample_bilinear_grid", {rnd({1, 3, 5, 5}, rng), rnd({1, 2, 4, 4}, rng, -0.95, 0.95)},
                [](Tape& t, In in) { return t.sample_bilinear_grid(in[0], in[1]); }});
  cs.push_back({"depth_to_space", {rnd({1, 8, 3, 3}, rng)}, [](Tape& t, In in) { return t.depth_to_space(in[0], 2); }});
  cs.push_back({"relu", {away_from({1, 2, 4, 4}, rng, {0.0}, -3, 3)},
                [](Tape& t, In in) { return t.activation(in[0], Activation::relu); }});
  cs.push_back({"silu", {rnd({1, 2, 4, 4}, rng, -3, 3)},
                [](Tape& t, In in) { return t.activation(in[0], Activation::silu); }});
  cs.push_back({"sigmoid", {rnd({1, 2, 4, 4}, rng, -3, 3)},
                [](Tape& t, In in) { return t.activation(in[0], Activation::sigmoid); }});
  cs.push_back({"hard_sigmoid", {away_from({1, 2, 4, 4}, rng, {-1.0, 1.0}, -3, 3)},
                [](Tape& t, In in) { return t.activation(in[0], Activation::hard_sigmoid); }});
  cs.push_back({"reduce_mean", {rnd({1, 3, 4, 5}, rng)}, [](Tape& t, In in) { return t.reduce_mean(in[0], {1, 3}); }});
  cs.push_back({"broadcast_mul_add", {rnd({1, 3, 4, 4}, rng), rnd({1, 3, 1, 1}, rng), rnd({1, 1, 4, 1}, rng)},
                [](Tape& t, In in) { return t.add(t.mul(in[0], in[1]), in[2]); }});
  cs.push_back({"instance_norm", {rnd({1, 3, 4, 4}, rng), rnd({3}, rng, 0.5, 1.5), rnd({3}, rng)},
                [](Tape& t, In in) { return t.instance_norm(in[0], in[1], in[2], 1e-5); }});
  cs.push_back({"deform_aggregate",
                {rnd({1, 2, 5, 5}, rng), rnd({1, 2, 5, 5}, rng), rnd({1, 18, 5, 5}, rng, -1.5, 1.5),
                 rnd({1, 9, 5, 5}, rng, 0.0, 1.0), rnd({2, 9}, rng)},
                [](Tape& t, In in) { return t.deform_aggregate({in[0], in[1]}, in[2], in[3], in[4]); }});
  return cs;
}

std::vector<Case> dysample_cases(Rng& rng) {
  std::vector<Case> cs;
  auto up = [](int scale, int groups) {
    return [scale, groups](Tape& t, In in) {
      DySampleParamsT<Var> p;
      p.offset_gen = layer(in[1], in[2]);
      p.scale = scale;
      p.groups = groups;
      return dysample_upsample(t, in[0], p);
    };
  };
  cs.push_back({"dysample_upsample_s2",
                {rnd({1, 4, 4, 4}, rng), rnd({16, 4, 1, 1}, rng, -0.3, 0.3), rnd({16}, rng, -0.3, 0.3)}, up(2, 2)});
  cs.push_back({"dysample_upsample_s4",
                {rnd({1, 2, 3, 3}, rng), rnd({32, 2, 1, 1}, rng, -0.3, 0.3), rnd({32}, rng, -0.3, 0.3)}, up(4, 1)});
  return cs;
}

// Upsampler offset weights, when given, enter as tape constants.
SsffParamsT<Var> ssff_params(Tape& t, std::span<const Var> in, const std::vector<TensorD>* upsampler) {
  SsffParamsT<Var> p;
  if (upsampler) {
    const auto& u = *upsampler;
    DySampleParamsT<Var> d4, d5;
    d4.offset_gen = layer(t.constant(u[0]), t.constant(u[1]));
    d4.scale = 2;
    d4.groups = 2;
    d5.offset_gen = layer(t.constant(u[2]), t.constant(u[3]));
    d5.scale = 4;
    d5.groups = 2;
    p.dysample_p4 = d4;
    p.dysample_p5 = d5;
  }
  p.conv3d.weight = in[0];
  p.norm_scale = in[1];
  p.norm_shift = in[2];
  p.gaussian = GaussianSpec{};
  return p;
}

CpamParamsT<Var> cpam_params(std::span<const Var> in, bool align) {
  CpamParamsT<Var> p;
  p.channel_conv = layer(in[0], in[1], 1, {0, 1, 0});
  p.pos_h = layer(in[2], in[3], 1, {0, 1, 0});
  p.pos_w = layer(in[4], in[5], 1, {0, 0, 1});
  if (align) p.align = layer(in[6], in[7]);
  return p;
}

std::vector<TensorD> cpam_inputs(Rng& rng, std::int64_t c) {
  return {rnd({1, 1, 3, 1}, rng), rnd({1}, rng), rnd({c, c, 3, 1}, rng, -0.5, 0.5), rnd({c}, rng),
          rnd({c, c, 1, 3}, rng, -0.5, 0.5), rnd({c}, rng)};
}

std::vector<Case> scale_fusion_cases(Rng& rng) {
  std::vector<Case> cs;
  cs.push_back({"smooth", {rnd({1, 2, 6, 6}, rng)}, [](Tape& t, In in) { return smooth(t, in[0], GaussianSpec{}, 1); }});
  {
    std::vector<TensorD> x = {rnd({1, 2, 8, 8}, rng), rnd({1, 3, 4, 4}, rng), rnd({1, 4, 2, 2}, rng),
                              rnd({2, 2, 1, 1}, rng), rnd({2}, rng),        rnd({2, 3, 1, 1}, rng),
                              rnd({2}, rng),          rnd({2, 4, 1, 1}, rng), rnd({2}, rng)};
    cs.push_back({"tfe_fuse", x, [](Tape& t, In in) {
                    TfeParamsT<Var> p;
                    p.large.conv = layer(in[3], in[4]);
                    p.medium.conv = layer(in[5], in[6]);
                    p.small.conv = layer(in[7], in[8]);
                    return tfe_fuse(t, in[0], in[1], in[2], p);
                  }});
  }
  {
    std::vector<TensorD> x = {rnd({1, 4, 8, 8}, rng), rnd({1, 4, 4, 4}, rng), rnd({1, 4, 2, 2}, rng)};
    auto up = std::make_shared<std::vector<TensorD>>(std::vector<TensorD>{
        rnd({16, 4, 1, 1}, rng, -0.3, 0.3), rnd({16}, rng, -0.3, 0.3), rnd({64, 4, 1, 1}, rng, -0.3, 0.3),
        rnd({64}, rng, -0.3, 0.3)});
    for (TensorD v : {rnd({3, 4, 3, 1, 1}, rng), rnd({3}, rng, 0.5, 1.5), rnd({3}, rng)}) x.push_back(v);
    cs.push_back({"dssff_fuse", x, [up](Tape& t, In in) {
                    return dssff_fuse(t, in[0], in[1], in[2], ssff_params(t, in.subspan(3), up.get()));
                  }});
  }
  {
    std::vector<TensorD> x = {rnd({1, 4, 8, 8}, rng), rnd({1, 4, 4, 4}, rng), rnd({1, 4, 2, 2}, rng),
                              rnd({3, 4, 3, 1, 1}, rng), rnd({3}, rng, 0.5, 1.5), rnd({3}, rng)};
    cs.push_back({"ssff_fuse_nearest", x, [](Tape& t, In in) {
                    return dssff_fuse(t, in[0], in[1], in[2], ssff_params(t, in.subspan(3), nullptr));
                  }});
  }
  cs.push_back({"channel_attention", {rnd({1, 6, 4, 4}, rng), rnd({1, 1, 3, 1}, rng), rnd({1}, rng)},
                [](Tape& t, In in) { return channel_attention(t, in[0], layer(in[1], in[2], 1, {0, 1, 0})); }});
  {
    std::vector<TensorD> x = {rnd({1, 3, 4, 5}, rng)};
    auto p = cpam_inputs(rng, 3);
    x.insert(x.end(), p.begin(), p.end());
    cs.push_back({"position_attention", x,
                  [](Tape& t, In in) { return position_attention(t, in[0], cpam_params(in.subspan(1), false)); }});
  }
  {
    std::vector<TensorD> x = {rnd({1, 3, 4, 4}, rng), rnd({1, 3, 4, 4}, rng)};
    auto p = cpam_inputs(rng, 3);
    x.insert(x.end(), p.begin(), p.end());
    cs.push_back({"cpam_forward", x,
                  [](Tape& t, In in) { return cpam_forward(t, in[0], in[1], cpam_params(in.subspan(2), false)); }});
  }
  {
    std::vector<TensorD> x = {rnd({1, 3, 4, 4}, rng), rnd({1, 2, 4, 4}, rng)};
    auto p = cpam_inputs(rng, 3);
    x.insert(x.end(), p.begin(), p.end());
    x.push_back(rnd({3, 2, 1, 1}, rng));
    x.push_back(rnd({3}, rng));
    cs.push_back({"cpam_forward_aligned", x,
                  [](Tape& t, In in) { return cpam_forward(t, in[0], in[1], cpam_params(in.subspan(2), true)); }});
  }
  return cs;
}

// Inputs: L levels, then scale_fc (w, b), offset_conv (w, b), spatial weight,
// task_fc1 (w, b), task_fc2 (w, b).
std::vector<TensorD> dyhead_inputs(Rng& rng, int levels, std::int64_t c, std::int64_t h, std::int64_t w) {
  std::vector<TensorD> x;
  for (int l = 0; l < levels; ++l) x.push_back(rnd({1, c, h, w}, rng));
  const std::int64_t hidden = std::max<std::int64_t>(1, c / 4);
  x.push_back(rnd({1, 1, 1, 1}, rng, 0.5, 1.0));
  x.push_back(rnd({1}, rng, 0.3, 0.5));
  x.push_back(rnd({27, c, 3, 3}, rng, -0.3, 0.3));
  x.push_back(rnd({27}, rng, -0.3, 0.3));
  x.push_back(rnd({static_cast<std::int64_t>(levels), 9}, rng, 0.0, 0.3));
  x.push_back(rnd({hidden, c, 1, 1}, rng));
  x.push_back(rnd({hidden}, rng, 0.5, 1.0));
  x.push_back(rnd({4 * c, hidden, 1, 1}, rng, -0.5, 0.5));
  x.push_back(rnd({4 * c}, rng, -0.5, 0.5));
  return x;
}

struct DyIn {
  LevelStackT<Var> stack;
  DyHeadParamsT<Var> p;
};

DyIn dyhead_unpack(Tape& t, In in, int levels, int blocks) {
  DyIn d;
  std::vector<Var> maps(in.begin(), in.begin() + levels);
  d.stack = make_level_stack(t, maps, {});
  const In r = in.subspan(static_cast<std::size_t>(levels));
  d.p.scale_fc = layer(r[0], r[1]);
  d.p.offset_conv = layer(r[2], r[3], 1, {0, 1, 1});
  d.p.spatial_weight = r[4];
  d.p.task_fc1 = layer(r[5], r[6]);
  d.p.task_fc2 = layer(r[7], r[8]);
  d.p.block_count = blocks;
  return d;
}

Var flatten_levels(Tape& t, const LevelStackT<Var>& s) { return t.concat(s.levels, 1); }

std::vector<Case> dyhead_cases(Rng& rng) {
  std::vector<Case> cs;
  cs.push_back({"scale_attention", dyhead_inputs(rng, 2, 4, 5, 5), [](Tape& t, In in) {
                  DyIn d = dyhead_unpack(t, in, 2, 1);
                  return flatten_levels(t, scale_attention(t, d.stack, d.p));
                }});
  cs.push_back({"spatial_attention", dyhead_inputs(rng, 2, 4, 5, 5), [](Tape& t, In in) {
                  DyIn d = dyhead_unpack(t, in, 2, 1);
                  return flatten_levels(t, spatial_attention(t, d.stack, d.p));
                }});
  cs.push_back({"spatial_attention_1level", dyhead_inputs(rng, 1, 4, 5, 5), [](Tape& t, In in) {
                  DyIn d = dyhead_unpack(t, in, 1, 1);
                  return flatten_levels(t, spatial_attention(t, d.stack, d.p));
                }});
  cs.push_back({"task_attention", dyhead_inputs(rng, 2, 4, 5, 5), [](Tape& t, In in) {
                  DyIn d = dyhead_unpack(t, in, 2, 1);
                  return flatten_levels(t, task_attention(t, d.stack, d.p));
                }});
  cs.push_back({"dyhead_block", dyhead_inputs(rng, 2, 4, 5, 5), [](Tape& t, In in) {
                  DyIn d = dyhead_unpack(t, in, 2, 1);
                  return flatten_levels(t, dyhead_block(t, d.stack, d.p));
                }});
  return cs;
}

std::vector<Case> cases_for(const std::string& module, Rng& rng) {
  if (module == "tensor-core") return tensor_core_cases(rng);
  if (module == "dysample") return dysample_cases(rng);
  if (module == "scale-fusion") return scale_fusion_cases(rng);
  if (module == "dyhead") return dyhead_cases(rng);
  throw ParameterError("gradcheck: unknown module '" + module + "'");
}

}  // namespace

const std::vector<std::string>& gradcheck_modules() {
  static const std::vector<std::string> m = {"tensor-core", "dysample", "scale-fusion", "dyhead"};
  return m;
}

std::vector<GradcheckResult> run_gradcheck_suite(const std::string& module, std::uint64_t seed, double eps,
                                                 double tolerance) {
  std::vector<std::string> modules;
  if (module == "all") {
    modules = gradcheck_modules();
  } else {
    modules = {module};
  }
  std::vector<GradcheckResult> out;
  for (const std::string& m : modules) {
    Rng rng(stream_seed(seed, m));
    for (const Case& c : cases_for(m, rng)) {
      GradcheckResult r{m, c.op, 0.0, false, {}};
      try {
        r.max_rel_error = gradcheck(c.fn, c.inputs, eps, seed).max_rel_error;
        r.pass = r.max_rel_error < tolerance;
      } catch (const Error& e) {
        r.max_rel_error = std::numeric_limits<double>::infinity();
        r.error = e.what();
      }
      out.push_back(r);
    }
  }
  return out;
}

}  // namespace dassf
