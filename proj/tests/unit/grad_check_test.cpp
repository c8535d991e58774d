#include "hct/errors.hpp"
#include "hct/grad_check.hpp"
#include "hct/gradient_suite.hpp"
#include "support/random.hpp"

#include <gtest/gtest.h>

namespace hct {
namespace {

TEST(RelativeError, FloorsTheDenominator) {
  EXPECT_EQ(relative_error(1.0, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(relative_error(1.0, 3.0), 0.5);
  EXPECT_DOUBLE_EQ(relative_error(0.0, 1e-12), 1e-12 / 1e-8);
}

TEST(GradCheck, LinearFunctionIsExact) {
  std::mt19937_64 rng(1);
  const Tensor x = testing::random_tensor(rng, {3, 4});
  const GradCheckResult r = grad_check([](Graph&, Var v) { return sum(v); }, x);
  EXPECT_LT(r.max_rel_error, 1e-10);
  EXPECT_FALSE(r.kink);
  EXPECT_EQ(r.coordinates, 12u);
}

TEST(GradCheck, ReluAtExactZeroIsReportedAsKink) {
  const Tensor x = Tensor::from_vector({0.0, 1.0});
  const GradCheckResult r = grad_check([](Graph&, Var v) { return sum(relu(v)); }, x);
  EXPECT_TRUE(r.kink);
}

TEST(GradCheck, DetectsAWrongBackward) {
  // Custom op whose recorded derivative is off by a factor of two.
  const Tensor x = Tensor::from_vector({0.3, -0.7});
  const GradCheckResult r = grad_check(
      [](Graph& g, Var v) {
        RowMatrix y = v.value().array().square();
        const RowMatrix in = v.value();
        Var sq = g.record(y, {v.id()}, [in](const RowMatrix& up, Graph::InputGrads grads) {
          if (grads[0]) accumulate(grads[0], (4.0 * in.array() * up.array()).matrix());
        });
        return sum(sq);
      },
      x);
  EXPECT_GT(r.max_rel_error, 0.1);
}

TEST(GradCheck, RejectsNonPositiveStep) {
  const Tensor x = Tensor::from_vector({1.0});
  EXPECT_THROW(grad_check([](Graph&, Var v) { return sum(v); }, x, 0.0), UsageError);
}

TEST(GradientSuite, EveryOpAndTheModelPass) {
  const GradientSuiteReport r = run_gradient_suite();
  ASSERT_FALSE(r.ops.empty());
  for (const auto& op : r.ops) {
    EXPECT_LE(op.max_rel_error, kOpGradTolerance) << op.op;
    EXPECT_GT(op.checks, 0u) << op.op;
    EXPECT_EQ(op.checks + op.kinks, 100u) << op.op;
  }
  EXPECT_LE(r.model.max_rel_error, kModelGradTolerance);
  EXPECT_TRUE(r.passed());
}

TEST(GradientSuite, CoversTheModelOps) {
  const GradientSuiteReport r = run_gradient_suite({.seeds = 1});
  std::vector<std::string> names;
  for (const auto& op : r.ops) names.push_back(op.op);
  for (const char* want : {"matmul", "conv1d", "relu", "maxpool1d", "softmax_rows", "sigmoid", "layer_norm",
                           "concat_last", "bce_loss", "attention"}) {
    EXPECT_NE(std::find(names.begin(), names.end(), want), names.end()) << want;
  }
}

TEST(GradientSuite, LargerStepRelaxesTolerance) {
  EXPECT_EQ(tolerance_scale(1e-5), 1.0);
  EXPECT_EQ(tolerance_scale(1e-6), 1.0);
  EXPECT_NEAR(tolerance_scale(1e-3), 1e4, 1e-6);
  const GradientSuiteReport r = run_gradient_suite({.seeds = 20, .eps = 1e-3});
  EXPECT_NEAR(r.op_tolerance, 1e-2, 1e-12);
  EXPECT_TRUE(r.passed());
}

}  // namespace
}  // namespace hct
