#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "dassf/errors.hpp"

namespace dassf {

using Shape = std::vector<std::int64_t>;

inline std::int64_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::int64_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape);

/// Axis label used in error messages: N,C,H,W for rank 4 and N,C,D,H,W for rank 5.
std::string axis_name(std::size_t rank, std::size_t axis);

/// Dense row-major tensor. Storage is shared between copies and never mutated
/// once a second owner exists; `mutable_data()` detaches first.
template <class T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;

  explicit BasicTensor(Shape shape, T fill = T{0}) : shape_(std::move(shape)) {
    validate_extents();
    data_ = std::make_shared<std::vector<T>>(static_cast<std::size_t>(shape_numel(shape_)), fill);
  }

  BasicTensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)) {
    validate_extents();
    if (static_cast<std::int64_t>(values.size()) != shape_numel(shape_)) {
      throw DimensionError("*", "data length " + std::to_string(values.size()) +
                                    " does not match shape " + shape_str(shape_));
    }
    data_ = std::make_shared<std::vector<T>>(std::move(values));
  }

  /// A tensor that owns no storage (the default-constructed state).
  bool is_null() const noexcept { return data_ == nullptr; }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::int64_t numel() const noexcept { return data_ ? static_cast<std::int64_t>(data_->size()) : 0; }

  /// Extent of `axis`; negative values count from the back.
  std::int64_t dim(int axis) const {
    const int r = static_cast<int>(rank());
    const int a = axis < 0 ? axis + r : axis;
    if (a < 0 || a >= r) throw ParameterError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape_));
    return shape_[static_cast<std::size_t>(a)];
  }

  std::span<const T> data() const noexcept {
    return data_ ? std::span<const T>(*data_) : std::span<const T>();
  }

  std::span<T> mutable_data() {
    if (!data_) return {};
    if (data_.use_count() > 1) data_ = std::make_shared<std::vector<T>>(*data_);
    return std::span<T>(*data_);
  }

  T operator[](std::int64_t flat) const { return (*data_)[static_cast<std::size_t>(flat)]; }

  /// Element at a full multi-index.
  T at(std::initializer_list<std::int64_t> index) const {
    if (index.size() != rank()) throw ParameterError("index rank mismatch for " + shape_str(shape_));
    std::int64_t flat = 0;
    std::size_t axis = 0;
    for (std::int64_t i : index) {
      if (i < 0 || i >= shape_[axis]) throw ParameterError("index out of range for " + shape_str(shape_));
      flat = flat * shape_[axis] + i;
      ++axis;
    }
    return (*data_)[static_cast<std::size_t>(flat)];
  }

  /// Same storage under a new shape of equal element count.
  BasicTensor reshape(Shape shape) const {
    BasicTensor out;
    out.shape_ = std::move(shape);
    out.validate_extents();
    if (shape_numel(out.shape_) != numel()) {
      throw DimensionError("*", "cannot reshape " + shape_str(shape_) + " to " + shape_str(out.shape_));
    }
    out.data_ = data_;
    return out;
  }

  template <class U>
  BasicTensor<U> cast() const {
    std::vector<U> values(data().begin(), data().end());
    return BasicTensor<U>(shape_, std::move(values));
  }

  bool all_finite() const {
    for (T v : data()) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
    if (a.shape_ != b.shape_) return false;
    auto da = a.data();
    auto db = b.data();
    return std::equal(da.begin(), da.end(), db.begin(), db.end());
  }

 private:
  void validate_extents() const {
    for (std::size_t i = 0; i < shape_.size(); ++i) {
      if (shape_[i] < 1) {
        throw DimensionError(axis_name(shape_.size(), i), "extent must be >= 1, got " + shape_str(shape_));
      }
    }
  }

  Shape shape_;
  std::shared_ptr<std::vector<T>> data_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

/// Largest absolute elementwise difference; shapes must match.
template <class A, class B>
double max_abs_diff(const BasicTensor<A>& a, const BasicTensor<B>& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("*", "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  double worst = 0.0;
  auto da = a.data();
  auto db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) {
    worst = std::max(worst, std::abs(static_cast<double>(da[i]) - static_cast<double>(db[i])));
  }
  return worst;
}

}  // namespace dassf
