#pragma once

// Named finite-difference checks for every differentiable op, shared by the
// test suite and the `gradcheck` subcommand.

#include <string>
#include <vector>

#include "panodepth/gradcheck.hpp"

namespace pano {

struct OpCheckResult {
  std::string op;
  GradCheckReport report;
  bool passed = false;
};

struct GradSuiteOptions {
  double tolerance = 1e-3;
  double eps = 1e-6;  // step of the double-precision reference
  bool double_precision = false;  // float32 by default
  bool inject_fault = false;      // negate analytic gradients
  std::uint64_t seed = 1234;
};

const std::vector<std::string>& gradcheck_op_names();

// Throws std::invalid_argument for an unknown op name.
OpCheckResult run_gradcheck(const std::string& op, const GradSuiteOptions& options = {});

}  // namespace pano
