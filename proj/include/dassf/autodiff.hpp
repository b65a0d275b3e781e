#pragma once

// Reverse-mode differentiation over tensor-core operators. A Tape exposes the
// same operator surface as Eager<double>, records one entry per operator call
// and replays the entries backwards. It exists to check analytic gradients of
// the composite blocks against finite differences.

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "dassf/eager.hpp"
#include "dassf/ops.hpp"

namespace dassf {

struct Var {
  std::size_t id = 0;
};

class Tape {
 public:
  using Value = Var;
  using Backward = std::function<std::vector<TensorD>(const TensorD& grad_out)>;

  struct Record {
    std::string op;
    std::vector<std::size_t> inputs;
    std::size_t output;
    Backward backward;  // one gradient per input, null where none flows
  };

  /// Differentiable input.
  Var leaf(TensorD value);
  /// Input excluded from differentiation.
  Var constant(const TensorD& value);

  const TensorD& value(Var v) const;
  const Shape& shape(Var v) const { return value(v).shape(); }
  bool all_finite(Var v) const { return value(v).all_finite(); }
  bool requires_grad(Var v) const;
  bool is_leaf(Var v) const;
  std::size_t size() const noexcept { return values_.size(); }
  const std::vector<Record>& records() const noexcept { return records_; }

  Var conv2d(Var x, const ConvLayer<Var>& p);
  Var conv3d(Var x, const ConvLayer<Var>& p);
  Var pool2d(Var x, PoolMode mode, int kernel, int stride);
  Var resize_nearest_to(Var x, std::int64_t h, std::int64_t w);
  Var sample_bilinear_grid(Var x, Var coords);
  Var depth_to_space(Var x, int r);
  Var space_to_depth(Var x, int r);
  Var activation(Var x, Activation kind);
  Var reduce_mean(Var x, std::vector<int> axes);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var maximum(Var a, Var b);
  Var scale(Var x, double f);
  Var add_scalar(Var x, double v);
  Var clamp(Var x, double lo, double hi);
  Var concat(const std::vector<Var>& parts, int axis);
  Var slice(Var x, int axis, std::int64_t begin, std::int64_t count);
  Var reshape(Var x, Shape shape);
  Var permute_channels(Var x, const std::vector<std::int64_t>& index);
  Var instance_norm(Var x, Var scale_v, Var shift, double eps);
  Var deform_aggregate(const std::vector<Var>& levels, Var offsets, Var masks, Var weights);
  Var sum(Var x);

 private:
  Var record(std::string op, TensorD out, std::vector<Var> inputs, Backward backward);
  Var conv(Var x, const ConvLayer<Var>& p, bool volumetric);

  std::vector<TensorD> values_;
  std::vector<bool> requires_grad_;
  std::vector<bool> is_leaf_;
  std::vector<Record> records_;
};

/// Gradient of the scalar `output` with respect to every differentiable leaf,
/// keyed by leaf id. Leaves the output does not depend on get zeros.
std::map<std::size_t, TensorD> backward(const Tape& tape, Var output);

/// Differentiable function of several inputs, built on a fresh tape.
using DiffFn = std::function<Var(Tape&, std::span<const Var>)>;

struct GradcheckReport {
  double max_rel_error = 0.0;
  std::vector<double> per_input;
};

/// Compares backward() with central differences on the scalar
/// sum(projection * f(inputs)), where the projection is a fixed pseudo-random
/// tensor drawn from `seed`. Error per coordinate is
/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
GradcheckReport gradcheck(const DiffFn& f, const std::vector<TensorD>& inputs, double eps = 1e-5,
                          std::uint64_t seed = 17);

double gradcheck(const std::function<Var(Tape&, Var)>& f, const TensorD& x, double eps = 1e-5);

/// Lifts a conv layer onto the tape as differentiable leaves.
ConvLayer<Var> leaf_layer(Tape& tape, const BasicConvParams<double>& p);

}  // namespace dassf
