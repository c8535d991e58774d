#pragma once

#include "hct/graph.hpp"
#include "hct/tensor.hpp"

#include <functional>
#include <span>
#include <vector>

namespace hct {

struct GradCheckResult {
  /// max over coordinates of |analytic - numeric| / max(1e-8, |analytic| + |numeric|)
  double max_rel_error = 0.0;
  /// A relu or maxpool input sat within eps of a kink; the error figure is
  /// then not meaningful and the check should be reported, not failed.
  bool kink = false;
  std::size_t coordinates = 0;
};

/// Relative error of one analytic/numeric pair, with the 1e-8 denominator floor.
double relative_error(double analytic, double numeric);

/// Compares reverse-mode gradients with central differences.
///
/// `f` must bind every tensor in `targets` with Graph::param() and return a
/// scalar. Each target is perturbed in place and restored afterwards.
GradCheckResult grad_check(const std::function<Var(Graph&)>& f, std::span<Tensor* const> targets,
                           double eps = 1e-5);

/// Single-input form: `f` receives `x` bound as a differentiable leaf.
GradCheckResult grad_check(const std::function<Var(Graph&, Var)>& f, const Tensor& x, double eps = 1e-5);

}  // namespace hct
