#include "dassf/tensor.hpp"

namespace dassf {

std::string shape_str(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

std::string axis_name(std::size_t rank, std::size_t axis) {
  static const char* const k4[] = {"N", "C", "H", "W"};
  static const char* const k5[] = {"N", "C", "D", "H", "W"};
  if (rank == 4 && axis < 4) return k4[axis];
  if (rank == 5 && axis < 5) return k5[axis];
  return "axis" + std::to_string(axis);
}

}  // namespace dassf
