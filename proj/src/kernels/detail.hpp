#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "dassf/tensor.hpp"

namespace dassf::detail {

inline std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

inline std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return -floor_div(-a, b); }

/// Output indices o in [lo, hi) for which o*stride - pad + k falls in [0, extent).
struct ValidRange {
  std::int64_t lo;
  std::int64_t hi;
};
inline ValidRange valid_range(std::int64_t extent, std::int64_t out_extent, int stride, int pad, std::int64_t k) {
  std::int64_t lo = ceil_div(pad - k, stride);
  std::int64_t hi = floor_div(extent - 1 + pad - k, stride) + 1;
  if (lo < 0) lo = 0;
  if (hi > out_extent) hi = out_extent;
  if (hi < lo) hi = lo;
  return {lo, hi};
}

template <class T>
void require_rank(const BasicTensor<T>& x, std::size_t rank, const char* op) {
  if (x.rank() != rank) {
    throw DimensionError("rank", std::string(op) + " expects rank " + std::to_string(rank) + ", got " +
                                     shape_str(x.shape()));
  }
}

/// Row-major strides of `shape`.
inline Shape strides_of(const Shape& shape) {
  Shape s(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) s[i - 1] = s[i] * shape[i];
  return s;
}

}  // namespace dassf::detail
