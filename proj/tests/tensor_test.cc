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
#include "tegl/tensor.hpp"

#include <cmath>
#include <limits>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "tegl/error.hpp"
#include "tegl/optim.hpp"
#include "tegl/rng.hpp"

namespace tegl {
namespace {

TEST(TensorTest, ConstructionChecksLength) {
  EXPECT_THROW(Tensor(Shape{2, 3}, std::vector<float>(5)), DimensionError);
  Tensor t(Shape{2, 3}, 1.5f);
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_EQ(t.rank(), 2u);
  EXPECT_EQ(t.dim(1), 3u);
  EXPECT_NO_THROW(t.check());
}

TEST(TensorTest, ReshapeKeepsData) {
  Tensor t(Shape{2, 3}, {0, 1, 2, 3, 4, 5});
  const Tensor r = t.reshaped(Shape{3, 2});
  EXPECT_EQ(r.shape, (Shape{3, 2}));
  EXPECT_EQ(r.data, t.data);
  EXPECT_THROW(t.reshaped(Shape{4}), DimensionError);
}

TEST(TensorTest, CheckFlagsBrokenInvariants) {
  Tensor t(Shape{2}, {1.0f, std::numeric_limits<float>::quiet_NaN()});
  EXPECT_FALSE(t.all_finite());
  EXPECT_THROW(t.check(), StateError);
  Tensor g(Shape{2}, {1.0f, 2.0f});
  g.grad.resize(3);
  EXPECT_THROW(g.check(), StateError);
}

TEST(TensorTest, ClampIsIdempotent) {
  Rng rng(4);
  Tensor t(Shape{50});
  for (float& x : t.data) x = static_cast<float>(rng.uniform(-1, 1));
  const Tensor once = clamp_nonneg(t);
  for (float x : once.data) EXPECT_GE(x, 0.0f);
  EXPECT_EQ(clamp_nonneg(once).data, once.data);
}

TEST(TensorTest, ShapeHelpers) {
  EXPECT_EQ(shape_numel(Shape{2, 3, 4}), 24u);
  EXPECT_EQ(shape_str(Shape{2, 3}), "[2, 3]");
}

TEST(RngTest, SplitStreamsAreIndependentOfParentUse) {
  Rng a(42), b(42);
  for (int i = 0; i < 10; ++i) a.next();
  EXPECT_EQ(a.split("x").next(), b.split("x").next());
  EXPECT_NE(b.split("x").next(), b.split("y").next());
  EXPECT_NE(b.split(1).next(), b.split(2).next());
}

TEST(RngTest, SameSeedSameSequence) {
  Rng a(7), b(7);
  for (int i = 0; i < 100; ++i) ASSERT_EQ(a.next(), b.next());
}

TEST(RngTest, BelowStaysInRangeAndCoversIt) {
  Rng r(1);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 2000; ++i) {
    const auto v = r.below(7);
    ASSERT_LT(v, 7u);
    seen.insert(v);
  }
  EXPECT_EQ(seen.size(), 7u);
}

TEST(RngTest, UniformMeanIsCentred) {
  Rng r(3);
  double s = 0.0;
  for (int i = 0; i < 20000; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    s += u;
  }
  EXPECT_NEAR(s / 20000.0, 0.5, 0.01);
}

TEST(RngTest, ShuffleIsAPermutation) {
  std::vector<int> v(50);
  for (int i = 0; i < 50; ++i) v[i] = i;
  Rng r(9);
  r.shuffle(v.begin(), v.end());
  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) EXPECT_EQ(sorted[i], i);
  EXPECT_NE(v, sorted);
}

TEST(OptimTest, UpdateMatchesFormula) {
  Var p = Var::parameter(Tensor(Shape{1}, {1.0f}));
  SgdState s;
  s.lr = 0.1;
  s.momentum = 0.9;
  s.weight_decay = 0.01;
  std::vector<Var> params{p};
  // Two steps with gradient 2.
  double v = 0.0, x = 1.0;
  for (int k = 0; k < 2; ++k) {
    p.zero_grad();
    backward(scale(sum(p), 2.0f));
    sgd_step(params, s);
    v = 0.9 * v + 2.0 + 0.01 * x;
    x -= 0.1 * v;
    EXPECT_NEAR(p.value()[0], x, 1e-6);
  }
}

TEST(OptimTest, StepScheduleDecaysLearningRate) {
  SgdState s;
  s.lr = 0.025;
  s.step_epochs = 15;
  s.gamma = 0.1;
  for (int e = 0; e < 14; ++e) s.end_epoch();
  EXPECT_DOUBLE_EQ(s.lr, 0.025);
  s.end_epoch();
  EXPECT_NEAR(s.lr, 0.0025, 1e-15);
}

TEST(OptimTest, DefaultsAndValidation) {
  SgdState s;
  EXPECT_DOUBLE_EQ(s.momentum, 0.9);
  EXPECT_DOUBLE_EQ(s.lr, 0.025);
  EXPECT_DOUBLE_EQ(s.weight_decay, 1e-4);
  EXPECT_EQ(s.step_epochs, 15);
  EXPECT_DOUBLE_EQ(s.gamma, 0.1);
  s.lr = -1;
  EXPECT_THROW(s.validate(), ConfigError);
}

TEST(OptimTest, MissingGradientIsStateError) {
  std::vector<Var> params{Var::parameter(Tensor(Shape{1}, {1.0f}))};
  SgdState s;
  EXPECT_THROW(sgd_step(params, s), StateError);
}

}  // namespace
}  // namespace tegl
