#pragma once

// Finite-difference checks of every differentiable operator and composite
// block, grouped by module. Inputs are drawn from the given seed; inputs of
// non-smooth activations are kept at least 1e-3 away from their kinks.

#include <cstdint>
#include <string>
#include <vector>

namespace dassf {

inline constexpr double kGradcheckTolerance = 1e-4;

struct GradcheckResult {
  std::string module;
  std::string op;
  double max_rel_error = 0.0;
  bool pass = false;
  std::string error;  // set when the check itself failed to run
};

/// "tensor-core", "dysample", "scale-fusion", "dyhead".
const std::vector<std::string>& gradcheck_modules();

/// Runs the cases of `module` (or every module for "all"). Throws
/// ParameterError for unknown module names.
std::vector<GradcheckResult> run_gradcheck_suite(const std::string& module, std::uint64_t seed, double eps = 1e-5,
                                                 double tolerance = kGradcheckTolerance);

}  // namespace dassf
