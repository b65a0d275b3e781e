#include "dassf/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "dassf/rng.hpp"

namespace dassf {
namespace {

TensorD expand_to(const TensorD& x, const Shape& shape) {
  if (x.shape() == shape) return x;
  return add(TensorD(shape), x);
}

// Inverse of slice(): grad placed at [begin, begin+count) along axis, zeros elsewhere.
TensorD unslice(const TensorD& g, const Shape& full, std::size_t axis, std::int64_t begin) {
  std::int64_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= full[i];
  for (std::size_t i = axis + 1; i < full.size(); ++i) inner *= full[i];
  const std::int64_t extent = full[axis], count = g.shape()[axis];
  TensorD out(full);
  auto dst = out.mutable_data();
  const double* src = g.data().data();
  for (std::int64_t o = 0; o < outer; ++o) {
    std::copy(src + o * count * inner, src + (o + 1) * count * inner, dst.data() + (o * extent + begin) * inner);
  }
  return out;
}

std::size_t positive_axis(int axis, std::size_t rank) {
  return static_cast<std::size_t>(axis < 0 ? axis + static_cast<int>(rank) : axis);
}

}  // namespace

Var Tape::leaf(TensorD value) {
  values_.push_back(std::move(value));
  requires_grad_.push_back(true);
  is_leaf_.push_back(true);
  return Var{values_.size() - 1};
}

Var Tape::constant(const TensorD& value) {
  values_.push_back(value);
  requires_grad_.push_back(false);
  is_leaf_.push_back(true);
  return Var{values_.size() - 1};
}

const TensorD& Tape::value(Var v) const {
  if (v.id >= values_.size()) throw LookupError("tape has no value with id " + std::to_string(v.id));
  return values_[v.id];
}

bool Tape::requires_grad(Var v) const {
  value(v);
  return requires_grad_[v.id];
}

bool Tape::is_leaf(Var v) const {
  value(v);
  return is_leaf_[v.id];
}

Var Tape::record(std::string op, TensorD out, std::vector<Var> inputs, Backward backward_fn) {
  bool needs = false;
  std::vector<std::size_t> ids;
  ids.reserve(inputs.size());
  for (Var v : inputs) {
    value(v);
    needs = needs || requires_grad_[v.id];
    ids.push_back(v.id);
  }
  values_.push_back(std::move(out));
  requires_grad_.push_back(needs);
  is_leaf_.push_back(false);
  const std::size_t id = values_.size() - 1;
  records_.push_back(Record{std::move(op), std::move(ids), id, std::move(backward_fn)});
  return Var{id};
}

ConvLayer<Var> leaf_layer(Tape& tape, const BasicConvParams<double>& p) {
  ConvLayer<Var> out;
  out.weight = tape.leaf(p.weight);
  if (p.bias) out.bias = tape.leaf(*p.bias);
  out.stride = p.stride;
  out.padding = p.padding;
  out.groups = p.groups;
  return out;
}

Var Tape::conv(Var x, const ConvLayer<Var>& p, bool volumetric) {
  BasicConvParams<double> layer;
  layer.weight = value(p.weight);
  if (p.bias) layer.bias = value(*p.bias);
  layer.stride = p.stride;
  layer.padding = p.padding;
  layer.groups = p.groups;
  const TensorD& xv = value(x);
  TensorD out = volumetric ? dassf::conv3d(xv, layer) : dassf::conv2d(xv, layer);
  std::vector<Var> inputs{x, p.weight};
  if (p.bias) inputs.push_back(*p.bias);
  const bool has_bias = p.bias.has_value();
  return record(volumetric ? "conv3d" : "conv2d", std::move(out), std::move(inputs),
                [xv, layer, has_bias](const TensorD& g) {
                  ConvGrads cg = conv_backward(xv, layer, g);
                  std::vector<TensorD> r{cg.input, cg.weight};
                  if (has_bias) r.push_back(cg.bias);
                  return r;
                });
}

Var Tape::conv2d(Var x, const ConvLayer<Var>& p) { return conv(x, p, false); }
Var Tape::conv3d(Var x, const ConvLayer<Var>& p) { return conv(x, p, true); }

Var Tape::pool2d(Var x, PoolMode mode, int kernel, int stride) {
  const TensorD xv = value(x);
  return record("pool2d", dassf::pool2d(xv, mode, kernel, stride), {x}, [xv, mode, kernel, stride](const TensorD& g) {
    return std::vector<TensorD>{pool2d_backward(xv, mode, kernel, stride, g)};
  });
}

Var Tape::resize_nearest_to(Var x, std::int64_t h, std::int64_t w) {
  const Shape in = shape(x);
  return record("resize_nearest", dassf::resize_nearest_to(value(x), h, w), {x}, [in](const TensorD& g) {
    return std::vector<TensorD>{resize_nearest_to_backward(in, g)};
  });
}

Var Tape::sample_bilinear_grid(Var x, Var coords) {
  const TensorD xv = value(x);
  const TensorD cv = value(coords);
  return record("sample_bilinear_grid", dassf::sample_bilinear_grid(xv, cv), {x, coords}, [xv, cv](const TensorD& g) {
    GridSampleGrads gs = sample_bilinear_grid_backward(xv, cv, g);
    return std::vector<TensorD>{gs.input, gs.coords};
  });
}

Var Tape::depth_to_space(Var x, int r) {
  return record("depth_to_space", dassf::depth_to_space(value(x), r), {x},
                [r](const TensorD& g) { return std::vector<TensorD>{dassf::space_to_depth(g, r)}; });
}

Var Tape::space_to_depth(Var x, int r) {
  return record("space_to_depth", dassf::space_to_depth(value(x), r), {x},
                [r](const TensorD& g) { return std::vector<TensorD>{dassf::depth_to_space(g, r)}; });
}

Var Tape::activation(Var x, Activation kind) {
  const TensorD xv = value(x);
  return record("activation", dassf::activation(xv, kind), {x}, [xv, kind](const TensorD& g) {
    return std::vector<TensorD>{activation_backward(xv, kind, g)};
  });
}

Var Tape::reduce_mean(Var x, std::vector<int> axes) {
  const Shape in = shape(x);
  TensorD out = dassf::reduce_mean(value(x), std::span<const int>(axes));
  const double count = static_cast<double>(shape_numel(in) / out.numel());
  return record("reduce_mean", std::move(out), {x}, [in, count](const TensorD& g) {
    return std::vector<TensorD>{dassf::scale(expand_to(g, in), 1.0 / count)};
  });
}

Var Tape::add(Var a, Var b) {
  const Shape sa = shape(a), sb = shape(b);
  return record("add", dassf::add(value(a), value(b)), {a, b}, [sa, sb](const TensorD& g) {
    return std::vector<TensorD>{reduce_to_shape(g, sa), reduce_to_shape(g, sb)};
  });
}

Var Tape::sub(Var a, Var b) {
  const Shape sa = shape(a), sb = shape(b);
  return record("sub", dassf::sub(value(a), value(b)), {a, b}, [sa, sb](const TensorD& g) {
    return std::vector<TensorD>{reduce_to_shape(g, sa), reduce_to_shape(dassf::scale(g, -1.0), sb)};
  });
}

Var Tape::mul(Var a, Var b) {
  const TensorD av = value(a), bv = value(b);
  return record("mul", dassf::mul(av, bv), {a, b}, [av, bv](const TensorD& g) {
    return std::vector<TensorD>{reduce_to_shape(dassf::mul(g, bv), av.shape()),
                                reduce_to_shape(dassf::mul(g, av), bv.shape())};
  });
}

Var Tape::maximum(Var a, Var b) {
  const TensorD av = value(a), bv = value(b);
  return record("maximum", dassf::maximum(av, bv), {a, b}, [av, bv](const TensorD& g) {
    const TensorD ea = expand_to(av, g.shape());
    const TensorD eb = expand_to(bv, g.shape());
    TensorD ga(g.shape()), gb(g.shape());
    auto pa = ga.mutable_data();
    auto pb = gb.mutable_data();
    for (std::size_t i = 0; i < pa.size(); ++i) {
      // Ties route to the first operand, matching the forward's a >= b.
      if (ea[static_cast<std::int64_t>(i)] >= eb[static_cast<std::int64_t>(i)]) {
        pa[i] = g[static_cast<std::int64_t>(i)];
      } else {
        pb[i] = g[static_cast<std::int64_t>(i)];
      }
    }
    return std::vector<TensorD>{reduce_to_shape(ga, av.shape()), reduce_to_shape(gb, bv.shape())};
  });
}

Var Tape::scale(Var x, double f) {
  return record("scale", dassf::scale(value(x), f), {x},
                [f](const TensorD& g) { return std::vector<TensorD>{dassf::scale(g, f)}; });
}

Var Tape::add_scalar(Var x, double v) {
  return record("add_scalar", dassf::add_scalar(value(x), v), {x},
                [](const TensorD& g) { return std::vector<TensorD>{g}; });
}

Var Tape::clamp(Var x, double lo, double hi) {
  const TensorD xv = value(x);
  return record("clamp", dassf::clamp(xv, lo, hi), {x}, [xv, lo, hi](const TensorD& g) {
    TensorD gx(g.shape());
    auto d = gx.mutable_data();
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double v = xv[static_cast<std::int64_t>(i)];
      d[i] = (v >= lo && v <= hi) ? g[static_cast<std::int64_t>(i)] : 0.0;
    }
    return std::vector<TensorD>{gx};
  });
}

Var Tape::concat(const std::vector<Var>& parts, int axis) {
  std::vector<TensorD> vals;
  std::vector<std::int64_t> extents;
  for (Var p : parts) {
    vals.push_back(value(p));
    extents.push_back(vals.back().shape()[positive_axis(axis, vals.back().rank())]);
  }
  TensorD out = dassf::concat(std::span<const TensorD>(vals), axis);
  return record("concat", std::move(out), parts, [extents, axis](const TensorD& g) {
    std::vector<TensorD> r;
    std::int64_t begin = 0;
    for (std::int64_t e : extents) {
      r.push_back(dassf::slice(g, axis, begin, e));
      begin += e;
    }
    return r;
  });
}

Var Tape::slice(Var x, int axis, std::int64_t begin, std::int64_t count) {
  const Shape in = shape(x);
  const std::size_t a = positive_axis(axis, in.size());
  return record("slice", dassf::slice(value(x), axis, begin, count), {x}, [in, a, begin](const TensorD& g) {
    return std::vector<TensorD>{unslice(g, in, a, begin)};
  });
}

Var Tape::reshape(Var x, Shape new_shape) {
  const Shape in = shape(x);
  return record("reshape", value(x).reshape(std::move(new_shape)), {x},
                [in](const TensorD& g) { return std::vector<TensorD>{g.reshape(in)}; });
}

Var Tape::permute_channels(Var x, const std::vector<std::int64_t>& index) {
  const Shape in = shape(x);
  TensorD out = dassf::permute_channels(value(x), std::span<const std::int64_t>(index));
  return record("permute_channels", std::move(out), {x}, [in, index](const TensorD& g) {
    std::int64_t outer = in[0], inner = 1;
    for (std::size_t i = 2; i < in.size(); ++i) inner *= in[i];
    const std::int64_t c_in = in[1], c_out = static_cast<std::int64_t>(index.size());
    TensorD gx(in);
    auto dst = gx.mutable_data();
    const double* src = g.data().data();
    for (std::int64_t o = 0; o < outer; ++o) {
      for (std::int64_t c = 0; c < c_out; ++c) {
        double* to = dst.data() + (o * c_in + index[static_cast<std::size_t>(c)]) * inner;
        const double* from = src + (o * c_out + c) * inner;
        for (std::int64_t i = 0; i < inner; ++i) to[i] += from[i];
      }
    }
    return std::vector<TensorD>{gx};
  });
}

Var Tape::instance_norm(Var x, Var scale_v, Var shift, double eps) {
  const TensorD xv = value(x), sv = value(scale_v);
  return record("instance_norm", dassf::instance_norm(xv, sv, value(shift), eps), {x, scale_v, shift},
                [xv, sv, eps](const TensorD& g) {
                  NormGrads ng = instance_norm_backward(xv, sv, eps, g);
                  return std::vector<TensorD>{ng.input, ng.scale, ng.shift};
                });
}

Var Tape::deform_aggregate(const std::vector<Var>& levels, Var offsets, Var masks, Var weights) {
  std::vector<TensorD> lv;
  for (Var l : levels) lv.push_back(value(l));
  const TensorD ov = value(offsets), mv = value(masks), wv = value(weights);
  TensorD out = dassf::deform_aggregate(std::span<const TensorD>(lv), ov, mv, wv);
  std::vector<Var> inputs = levels;
  inputs.push_back(offsets);
  inputs.push_back(masks);
  inputs.push_back(weights);
  return record("deform_aggregate", std::move(out), std::move(inputs), [lv, ov, mv, wv](const TensorD& g) {
    DeformGrads dg = deform_aggregate_backward(std::span<const TensorD>(lv), ov, mv, wv, g);
    std::vector<TensorD> r = dg.levels;
    r.push_back(dg.offsets);
    r.push_back(dg.masks);
    r.push_back(dg.weights);
    return r;
  });
}

Var Tape::sum(Var x) {
  const Shape in = shape(x);
  return record("sum", dassf::sum_all(value(x)), {x},
                [in](const TensorD& g) { return std::vector<TensorD>{TensorD(in, g[0])}; });
}

std::map<std::size_t, TensorD> backward(const Tape& tape, Var output) {
  const TensorD& out = tape.value(output);
  if (out.numel() != 1) {
    throw ContractError("backward: output must be a scalar, got shape " + shape_str(out.shape()));
  }
  std::vector<TensorD> grads(tape.size());
  grads[output.id] = TensorD(out.shape(), 1.0);
  const auto& records = tape.records();
  for (auto it = records.rbegin(); it != records.rend(); ++it) {
    if (it->output > output.id || grads[it->output].is_null()) continue;
    if (!tape.requires_grad(Var{it->output})) continue;
    std::vector<TensorD> in_grads = it->backward(grads[it->output]);
    for (std::size_t k = 0; k < it->inputs.size(); ++k) {
      const std::size_t id = it->inputs[k];
      if (!tape.requires_grad(Var{id}) || in_grads[k].is_null()) continue;
      grads[id] = grads[id].is_null() ? in_grads[k] : add(grads[id], in_grads[k]);
    }
  }
  std::map<std::size_t, TensorD> result;
  for (std::size_t id = 0; id < tape.size(); ++id) {
    if (!tape.is_leaf(Var{id}) || !tape.requires_grad(Var{id})) continue;
    result.emplace(id, grads[id].is_null() ? TensorD(tape.shape(Var{id})) : grads[id]);
  }
  return result;
}

namespace {

struct Evaluation {
  double loss;
  std::map<std::size_t, TensorD> grads;
  std::vector<Var> leaves;
};

Evaluation evaluate(const DiffFn& f, const std::vector<TensorD>& inputs, std::uint64_t seed, bool with_grad) {
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(inputs.size());
  for (const auto& x : inputs) leaves.push_back(tape.leaf(x));
  const Var out = f(tape, std::span<const Var>(leaves));
  if (!tape.all_finite(out)) throw EvaluationError("gradcheck: function produced non-finite values");
  Rng rng(seed);
  const Var proj = tape.constant(random_uniform<double>(tape.shape(out), rng, -1.0, 1.0));
  const Var loss = tape.sum(tape.mul(out, proj));
  Evaluation e{tape.value(loss)[0], {}, leaves};
  if (with_grad) e.grads = backward(tape, loss);
  return e;
}

}  // namespace

GradcheckReport gradcheck(const DiffFn& f, const std::vector<TensorD>& inputs, double eps, std::uint64_t seed) {
  if (!(eps > 0.0)) throw ParameterError("gradcheck: eps must be > 0");
  const Evaluation base = evaluate(f, inputs, seed, true);
  GradcheckReport report;
  std::vector<TensorD> work = inputs;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const TensorD& analytic = base.grads.at(base.leaves[k].id);
    double worst = 0.0;
    for (std::int64_t i = 0; i < inputs[k].numel(); ++i) {
      const double orig = inputs[k][i];
      work[k].mutable_data()[static_cast<std::size_t>(i)] = orig + eps;
      const double up = evaluate(f, work, seed, false).loss;
      work[k].mutable_data()[static_cast<std::size_t>(i)] = orig - eps;
      const double down = evaluate(f, work, seed, false).loss;
      work[k].mutable_data()[static_cast<std::size_t>(i)] = orig;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[i];
      const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      worst = std::max(worst, err);
    }
    report.per_input.push_back(worst);
    report.max_rel_error = std::max(report.max_rel_error, worst);
  }
  return report;
}

double gradcheck(const std::function<Var(Tape&, Var)>& f, const TensorD& x, double eps) {
  return gradcheck([&f](Tape& t, std::span<const Var> in) { return f(t, in[0]); }, {x}, eps).max_rel_error;
}

}  // namespace dassf
