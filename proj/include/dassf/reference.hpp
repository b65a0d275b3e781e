#pragma once

// Single-threaded reference versions of the data-parallel kernels. They keep
// the textbook loop structure and are used by the equivalence tests and the
// kernel benchmark; production code calls the versions in ops.hpp.

#include "dassf/ops.hpp"

namespace dassf::reference {

template <class T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicConvParams<T>& p);
template <class T>
BasicTensor<T> conv3d(const BasicTensor<T>& x, const BasicConvParams<T>& p);
template <class T>
BasicTensor<T> pool2d(const BasicTensor<T>& x, PoolMode mode, int kernel, int stride);
template <class T>
BasicTensor<T> resize_nearest_to(const BasicTensor<T>& x, std::int64_t out_h, std::int64_t out_w);
template <class T>
BasicTensor<T> resize_bilinear(const BasicTensor<T>& x, int factor);
template <class T>
BasicTensor<T> sample_bilinear_grid(const BasicTensor<T>& x, const BasicTensor<T>& coords);
template <class T>
BasicTensor<T> depth_to_space(const BasicTensor<T>& x, int r);

}  // namespace dassf::reference
