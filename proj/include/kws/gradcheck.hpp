#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "kws/tensor.hpp"

namespace kws {

struct GradCheckOptions {
  double step = 1e-5;        // central-difference half-width
  double tolerance = 1e-3;   // on the relative error
  double floor = 1e-6;       // denominator floor for near-zero gradients
  std::size_t max_entries = 0;  // per tensor; 0 checks every entry
  std::uint64_t seed = 0;       // entry sampling
};

struct GradCheckResult {
  std::string name;
  std::string shape;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  bool passed = false;
};

/// Compares tape gradients of the scalar `loss` with respect to `wrt` against
/// central differences |a - n| / max(|a|, |n|, floor). `loss` must rebuild the
/// graph from the current values of the tensors on every call.
GradCheckResult check_gradient(const std::string& name, const std::function<Tensor64()>& loss,
                               const std::vector<NamedTensor<double>>& wrt, const GradCheckOptions& opts = {});

struct GradSuiteOptions {
  std::uint64_t seed = 1;
  std::size_t shapes_per_case = 5;
  /// Adds sampled checks of the losses on the full-size network.
  bool full_size = true;
  GradCheckOptions check;
};

/// Every differentiable primitive plus the composite network losses, each on
/// several random shapes, in double precision.
std::vector<GradCheckResult> gradient_suite(const GradSuiteOptions& opts = {});

}  // namespace kws
