#include <vector>

#include "dassf/ops.hpp"
#include "detail.hpp"

namespace dassf {

template <class T>
BasicTensor<T> depth_to_space(const BasicTensor<T>& x, int r) {
  detail::require_rank(x, 4, "depth_to_space");
  if (r < 1) throw ParameterError("depth_to_space: factor must be >= 1");
  const std::int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::int64_t rr = static_cast<std::int64_t>(r) * r;
  if (c % rr != 0) {
    throw DimensionError("C", "depth_to_space: " + std::to_string(c) + " channels not divisible by " + std::to_string(rr));
  }
  const std::int64_t oc = c / rr, oh = h * r, ow = w * r;
  BasicTensor<T> out({n, oc, oh, ow});
  auto dst = out.mutable_data();
  const T* src = x.data().data();
#pragma omp parallel for collapse(2) schedule(static)
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t co = 0; co < oc; ++co) {
      T* o = dst.data() + (b * oc + co) * oh * ow;
      for (int i = 0; i < r; ++i) {
        for (int j = 0; j < r; ++j) {
          const T* in = src + (b * c + co * rr + i * r + j) * h * w;
          for (std::int64_t y = 0; y < h; ++y) {
            for (std::int64_t xx = 0; xx < w; ++xx) o[(y * r + i) * ow + xx * r + j] = in[y * w + xx];
          }
        }
      }
    }
  }
  return out;
}

template <class T>
BasicTensor<T> space_to_depth(const BasicTensor<T>& x, int r) {
  detail::require_rank(x, 4, "space_to_depth");
  if (r < 1) throw ParameterError("space_to_depth: factor must be >= 1");
  const std::int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h % r != 0) throw DimensionError("H", "space_to_depth: height not divisible by factor");
  if (w % r != 0) throw DimensionError("W", "space_to_depth: width not divisible by factor");
  const std::int64_t rr = static_cast<std::int64_t>(r) * r;
  const std::int64_t oh = h / r, ow = w / r;
  BasicTensor<T> out({n, c * rr, oh, ow});
  auto dst = out.mutable_data();
  const T* src = x.data().data();
#pragma omp parallel for collapse(2) schedule(static)
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t ci = 0; ci < c; ++ci) {
      const T* in = src + (b * c + ci) * h * w;
      for (int i = 0; i < r; ++i) {
        for (int j = 0; j < r; ++j) {
          T* o = dst.data() + (b * c * rr + ci * rr + i * r + j) * oh * ow;
          for (std::int64_t y = 0; y < oh; ++y) {
            for (std::int64_t xx = 0; xx < ow; ++xx) o[y * ow + xx] = in[(y * r + i) * w + xx * r + j];
          }
        }
      }
    }
  }
  return out;
}

namespace {

// Splits a shape around `axis` into (outer, extent, inner) block sizes.
struct AxisBlocks {
  std::int64_t outer, extent, inner;
};

AxisBlocks axis_blocks(const Shape& s, std::size_t axis) {
  AxisBlocks b{1, s[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) b.outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) b.inner *= s[i];
  return b;
}

std::size_t normalize_axis(int axis, std::size_t rank) {
  const int r = static_cast<int>(rank);
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) throw ParameterError("axis " + std::to_string(axis) + " out of range");
  return static_cast<std::size_t>(a);
}

}  // namespace

template <class T>
BasicTensor<T> concat(std::span<const BasicTensor<T>> parts, int axis) {
  if (parts.empty()) throw ParameterError("concat: no inputs");
  const std::size_t a = normalize_axis(axis, parts[0].rank());
  Shape out_shape = parts[0].shape();
  out_shape[a] = 0;
  for (const auto& p : parts) {
    if (p.rank() != out_shape.size()) throw DimensionError("rank", "concat: rank mismatch");
    for (std::size_t i = 0; i < out_shape.size(); ++i) {
      if (i != a && p.shape()[i] != parts[0].shape()[i]) {
        throw DimensionError(axis_name(out_shape.size(), i), "concat: extents differ off the concat axis");
      }
    }
    out_shape[a] += p.shape()[a];
  }
  BasicTensor<T> out(out_shape);
  auto dst = out.mutable_data();
  const AxisBlocks ob = axis_blocks(out_shape, a);
  std::int64_t offset = 0;
  for (const auto& p : parts) {
    const AxisBlocks pb = axis_blocks(p.shape(), a);
    const T* src = p.data().data();
    const std::int64_t run = pb.extent * pb.inner;
    for (std::int64_t o = 0; o < pb.outer; ++o) {
      std::copy(src + o * run, src + (o + 1) * run, dst.data() + o * ob.extent * ob.inner + offset * ob.inner);
    }
    offset += pb.extent;
  }
  return out;
}

template <class T>
BasicTensor<T> slice(const BasicTensor<T>& x, int axis, std::int64_t begin, std::int64_t count) {
  const std::size_t a = normalize_axis(axis, x.rank());
  if (begin < 0 || count < 1 || begin + count > x.shape()[a]) {
    throw DimensionError(axis_name(x.rank(), a), "slice [" + std::to_string(begin) + ", " +
                                                     std::to_string(begin + count) + ") out of range");
  }
  Shape out_shape = x.shape();
  out_shape[a] = count;
  BasicTensor<T> out(out_shape);
  auto dst = out.mutable_data();
  const AxisBlocks b = axis_blocks(x.shape(), a);
  const T* src = x.data().data();
  for (std::int64_t o = 0; o < b.outer; ++o) {
    const T* from = src + (o * b.extent + begin) * b.inner;
    std::copy(from, from + count * b.inner, dst.data() + o * count * b.inner);
  }
  return out;
}

template <class T>
BasicTensor<T> permute_channels(const BasicTensor<T>& x, std::span<const std::int64_t> index) {
  if (x.rank() < 2) throw DimensionError("rank", "permute_channels needs rank >= 2");
  if (index.empty()) throw ParameterError("permute_channels: empty index");
  const AxisBlocks b = axis_blocks(x.shape(), 1);
  for (std::int64_t i : index) {
    if (i < 0 || i >= b.extent) throw DimensionError("C", "permute_channels: index out of range");
  }
  Shape out_shape = x.shape();
  out_shape[1] = static_cast<std::int64_t>(index.size());
  BasicTensor<T> out(out_shape);
  auto dst = out.mutable_data();
  const T* src = x.data().data();
  const std::int64_t nc = static_cast<std::int64_t>(index.size());
  for (std::int64_t o = 0; o < b.outer; ++o) {
    for (std::int64_t c = 0; c < nc; ++c) {
      const T* from = src + (o * b.extent + index[static_cast<std::size_t>(c)]) * b.inner;
      std::copy(from, from + b.inner, dst.data() + (o * nc + c) * b.inner);
    }
  }
  return out;
}

#define DASSF_INSTANTIATE_LAYOUT(T)                                                                      \
  template BasicTensor<T> depth_to_space(const BasicTensor<T>&, int);                                  \
  template BasicTensor<T> space_to_depth(const BasicTensor<T>&, int);                                  \
  template BasicTensor<T> concat(std::span<const BasicTensor<T>>, int);                                \
  template BasicTensor<T> slice(const BasicTensor<T>&, int, std::int64_t, std::int64_t);               \
  template BasicTensor<T> permute_channels(const BasicTensor<T>&, std::span<const std::int64_t>);

DASSF_INSTANTIATE_LAYOUT(float)
DASSF_INSTANTIATE_LAYOUT(double)

}  // namespace dassf
