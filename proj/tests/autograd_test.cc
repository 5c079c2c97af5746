/* Copyright 2026 The Tegl Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#include "tegl/autograd.hpp"

#include <cmath>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "tegl/error.hpp"

namespace tegl {
namespace {

TEST(AutogradTest, GradientsMatchFiniteDifferences) {
  const auto summary = testing::run_gradient_checks(100, 20261015);
  EXPECT_EQ(summary.cases, 100);
  EXPECT_EQ(summary.failures, 0) << "worst " << summary.worst_case << " rel " << summary.worst_relative_error;
  EXPECT_LE(summary.worst_relative_error, 1e-3);
}

TEST(AutogradTest, GradientChecksUnderOtherSeeds) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto summary = testing::run_gradient_checks(45, seed);
    EXPECT_EQ(summary.failures, 0) << summary.worst_case << " " << summary.worst_relative_error;
  }
}

TEST(AutogradTest, BackwardRejectsNonScalarLoss) {
  Var x = Var::parameter(Tensor(Shape{2}, {1.0f, 2.0f}));
  EXPECT_THROW(backward(square(x)), ContractError);
}

TEST(AutogradTest, BackwardWithoutTapeIsStateError) {
  Var x(Tensor::scalar(3.0f));
  EXPECT_THROW(backward(square(x)), StateError);
}

TEST(AutogradTest, NoTapeWithoutGradInputs) {
  Var x(Tensor(Shape{2, 3}, 1.0f));
  EXPECT_FALSE(relu(x).has_tape());
  Var p = Var::parameter(Tensor(Shape{2, 3}, 1.0f));
  EXPECT_TRUE(relu(p).has_tape());
}

TEST(AutogradTest, SharedSubexpressionAccumulates) {
  Var x = Var::parameter(Tensor::scalar(3.0f));
  Var y = add(mul(x, x), x);  // dy/dx = 2x + 1
  backward(y);
  EXPECT_FLOAT_EQ(x.grad()[0], 7.0f);
}

TEST(AutogradTest, L2NormSubgradientAtZero) {
  Var x = Var::parameter(Tensor(Shape{3}, 0.0f));
  backward(l2_norm(x));
  for (float g : x.grad()) EXPECT_EQ(g, 0.0f);
}

TEST(AutogradTest, SoftmaxRowsSumToOne) {
  Tensor logits(Shape{3, 4}, {1, 2, 3, 4, -50, 0, 50, 1, 0, 0, 0, 0});
  const Tensor p = softmax_rows(logits);
  for (std::size_t r = 0; r < 3; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < 4; ++j) {
      EXPECT_GE(p[r * 4 + j], 0.0f);
      s += p[r * 4 + j];
    }
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
}

TEST(AutogradTest, ArgmaxFirstMaxWins) {
  Tensor s(Shape{2, 3}, {1, 5, 5, 2, 2, 2});
  const auto a = argmax_rows(s);
  EXPECT_EQ(a[0], 1);
  EXPECT_EQ(a[1], 0);
}

TEST(AutogradTest, CrossEntropyMatchesClosedForm) {
  Var z(Tensor(Shape{1, 3}, {0.0f, 1.0f, 2.0f}));
  const double lse = std::log(1.0 + std::exp(1.0) + std::exp(2.0));
  const int label[1] = {0};
  EXPECT_NEAR(cross_entropy(z, label).item(), lse, 1e-6);
}

TEST(AutogradTest, ShapeMismatchIsDimensionError) {
  Var x(Tensor(Shape{2, 3}));
  Var w(Tensor(Shape{4, 5}));
  Var b(Tensor(Shape{4}));
  EXPECT_THROW(linear(x, w, b), DimensionError);
  EXPECT_THROW(add(x, Var(Tensor(Shape{3, 2}))), DimensionError);
}

TEST(AutogradTest, ConvSamePaddingKeepsSpatialSize) {
  Var x(Tensor(Shape{2, 3, 5, 7}, 0.5f));
  Var w(Tensor(Shape{4, 3, 3, 3}, 0.1f));
  Var b(Tensor(Shape{4}));
  EXPECT_EQ(conv2d(x, w, b).shape(), (Shape{2, 4, 5, 7}));
}

TEST(AutogradTest, ConvMatchesDirectSum) {
  Var x(Tensor(Shape{1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9}));
  Var w(Tensor(Shape{1, 1, 3, 3}, 1.0f));
  Var b(Tensor(Shape{1}, {0.5f}));
  const Tensor y = conv2d(x, w, b).value();
  EXPECT_FLOAT_EQ(y[4], 45.5f);  // centre sees all nine
  EXPECT_FLOAT_EQ(y[0], 1 + 2 + 4 + 5 + 0.5f);
}

}  // namespace
}  // namespace tegl
