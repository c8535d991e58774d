#pragma once

#include "hct/grad_check.hpp"
#include "hct/model.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace hct {

struct OpGradResult {
  std::string op;
  double max_rel_error = 0.0;
  std::size_t checks = 0;
  std::size_t kinks = 0;  // checks skipped because an input sat on a kink
};

struct GradientSuiteOptions {
  std::size_t seeds = 100;
  double eps = 1e-5;
  std::uint64_t base_seed = 0;
};

inline constexpr double kOpGradTolerance = 1e-6;
inline constexpr double kModelGradTolerance = 1e-4;

/// Central differences carry O(eps^2) truncation error, so tolerances scale
/// by (eps / 1e-5)^2 above the default step and never tighten below it.
double tolerance_scale(double eps);

struct GradientSuiteReport {
  std::vector<OpGradResult> ops;
  OpGradResult model;
  double op_tolerance = kOpGradTolerance;
  double model_tolerance = kModelGradTolerance;

  bool passed() const;
};

/// The small configuration the composed-model check runs on:
/// T=4, F=3, d_model=4, h=2, one block.
ModelConfig tiny_model_config();

/// Full forward + BCE on a random 2-sample batch, checked against every parameter.
GradCheckResult model_grad_check(const ModelConfig& config, std::uint64_t seed, double eps = 1e-5);

/// Every differentiable op on random inputs no larger than 4x4, one case per
/// seed, plus the composed model at tiny_model_config().
GradientSuiteReport run_gradient_suite(const GradientSuiteOptions& options = {});

}  // namespace hct
