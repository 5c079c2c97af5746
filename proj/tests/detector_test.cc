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
#include "tegl/detector.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "tegl/error.hpp"

namespace tegl {
namespace {

using testing::reference_quantile;

TEST(QuantileTest, MatchesTypeSevenOracle) {
  const std::vector<double> v{0.0, 0.1, 0.2, 0.9};
  EXPECT_NEAR(quantile_linear(v, 0.25), 0.075, 1e-12);
  EXPECT_NEAR(quantile_linear(v, 0.75), 0.375, 1e-12);
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> xs(4 + gen() % 40);
    for (double& x : xs) x = u(gen);
    for (double q : {0.0, 0.25, 0.5, 0.75, 1.0}) {
      EXPECT_NEAR(quantile_linear(xs, q), reference_quantile(xs, q), 1e-12);
    }
  }
}

TEST(AnomalyMetricTest, WorkedExample) {
  const std::vector<double> v{0.0, 0.1, 0.2, 0.9};
  const AnomalyMetric m = compute_anomaly_metric(v);
  EXPECT_NEAR(m.q1, 0.075, 1e-12);
  EXPECT_NEAR(m.q3, 0.375, 1e-12);
  EXPECT_NEAR(m.m_trojaned, 1.75, 1e-9);
  EXPECT_FALSE(m.degenerate);
}

TEST(AnomalyMetricTest, PermutationInvariant) {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> v(10);
    for (double& x : v) x = u(gen);
    const double base = compute_anomaly_metric(v).m_trojaned;
    std::shuffle(v.begin(), v.end(), gen);
    EXPECT_DOUBLE_EQ(compute_anomaly_metric(v).m_trojaned, base);
  }
}

TEST(AnomalyMetricTest, DegenerateAndTooShort) {
  const std::vector<double> flat(10, 0.1);
  const AnomalyMetric m = compute_anomaly_metric(flat);
  EXPECT_TRUE(m.degenerate);
  EXPECT_TRUE(std::isfinite(m.m_trojaned));
  const std::vector<double> three{0.1, 0.2, 0.3};
  EXPECT_THROW(compute_anomaly_metric(three), ContractError);
}

TEST(ModifyMetricTest, ChannelConstants) {
  EXPECT_NEAR(modify_metric(0.962, 3).value, 0.038, 1e-12);
  EXPECT_NEAR(modify_metric(3.681, 3).value, 2.681, 1e-12);
  EXPECT_NEAR(modify_metric(0.397, 3).value, 0.603, 1e-12);
  EXPECT_DOUBLE_EQ(modify_metric(2.0, 1).m_const, 1.5);
  EXPECT_NEAR(modify_metric(2.0, 1).value, 0.5, 1e-12);
  EXPECT_FALSE(modify_metric(2.0, 3).warning.has_value());
  const ModifiedMetric odd = modify_metric(2.0, 2);
  EXPECT_DOUBLE_EQ(odd.m_const, 1.0);
  EXPECT_TRUE(odd.warning.has_value());
}

LayerGraph linear_stack(std::size_t count) {
  LayerGraph g("stack", Shape{4}, 4);
  for (std::size_t i = 0; i < count; ++i) {
    g.add_linear(4, 4);
    if (i + 1 < count) g.add(LayerKind::relu);
  }
  return g;
}

TEST(InspectedLayerTest, RuleAndPresets) {
  EXPECT_EQ(select_inspected_layer(build_arch("cnn7", Shape{1, 28, 28}, 10)), 4u);
  EXPECT_EQ(select_inspected_layer(build_arch("vgg_slim", Shape{3, 32, 32}, 10)), 6u);
  EXPECT_EQ(select_inspected_layer(linear_stack(30)), 15u);
  EXPECT_EQ(select_inspected_layer(linear_stack(50)), 10u);
  EXPECT_THROW(select_inspected_layer(linear_stack(2)), ContractError);
  EXPECT_EQ(default_inspected_layer(build_arch("cnn7", Shape{1, 28, 28}, 10)), 5u);
  EXPECT_EQ(default_inspected_layer(build_arch("vgg_slim", Shape{3, 32, 32}, 10)), 8u);
  EXPECT_EQ(default_inspected_layer(linear_stack(7)), 4u);
}

// Single linear layer with identity weights on [3] inputs.
SplitModel identity_classifier(bool post_relu) {
  SplitModel s;
  s.classifier = LayerGraph("identity", Shape{3}, 3);
  s.classifier.add_linear(3, 3);
  Layer& l = s.classifier.layers().back();
  std::fill(l.weight.mutable_value().data.begin(), l.weight.mutable_value().data.end(), 0.0f);
  for (std::size_t i = 0; i < 3; ++i) l.weight.mutable_value().data[i * 3 + i] = 1.0f;
  std::fill(l.bias.mutable_value().data.begin(), l.bias.mutable_value().data.end(), 0.0f);
  s.post_relu_boundary = post_relu;
  return s;
}

std::vector<double> softmax3(const Tensor& logits) {
  std::vector<double> p(3);
  double z = 0.0;
  for (std::size_t i = 0; i < 3; ++i) z += p[i] = std::exp(static_cast<double>(logits.data[i]));
  for (double& x : p) x /= z;
  return p;
}

TEST(DummyIrTest, IdentityClassifierReachesTarget) {
  const SplitModel s = identity_classifier(true);
  const IrRun run = optimize_ir(s, 1, IrOptimConfig{}, Rng(4));
  const Tensor logits = s.classifier.predict(run.ir.reshaped(Shape{1, 3}));
  EXPECT_GT(softmax3(logits)[1], 0.99);
  EXPECT_GT(run.iterations, 0);
  EXPECT_LE(run.iterations, 1000);
  for (float x : run.ir.data) EXPECT_GE(x, 0.0f);
}

TEST(DummyIrTest, ClampOnlyBehindRelu) {
  IrOptimConfig cfg;
  cfg.iterations = 200;
  const IrRun free = optimize_ir(identity_classifier(false), 0, cfg, Rng(2));
  const IrRun clamped = optimize_ir(identity_classifier(true), 0, cfg, Rng(2));
  EXPECT_LT(*std::min_element(free.ir.data.begin(), free.ir.data.end()), 0.0f);
  EXPECT_GE(*std::min_element(clamped.ir.data.begin(), clamped.ir.data.end()), 0.0f);
}

TEST(DummyIrTest, RestartsAreAveraged) {
  const SplitModel s = identity_classifier(true);
  IrOptimConfig cfg;
  cfg.iterations = 100;
  const Tensor mean = generate_dummy_ir(s, 2, cfg, 9);
  const Rng base = Rng(9).split("dummy-ir").split(2);
  const Tensor a = optimize_ir(s, 2, cfg, base.split(0)).ir;
  const Tensor b = optimize_ir(s, 2, cfg, base.split(1)).ir;
  ASSERT_EQ(mean.data.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(mean.data[i], 0.5f * (a.data[i] + b.data[i]), 1e-6f);
}

TEST(DummyIrTest, RejectsBadConfig) {
  IrOptimConfig cfg;
  cfg.restarts_per_class = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = IrOptimConfig{};
  cfg.iterations = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(PosteriorMatrixTest, RowsAndDiagonal) {
  const SplitModel s = identity_classifier(true);
  std::vector<Tensor> irs;
  Rng rng(5);
  for (int c = 0; c < 3; ++c) {
    Tensor t(Shape{3});
    for (float& x : t.data) x = static_cast<float>(rng.uniform() * 2.0);
    irs.push_back(t);
  }
  const PosteriorMatrix pm = build_posterior_matrix(s, irs);
  ASSERT_EQ(pm.n, 3u);
  for (std::size_t r = 0; r < 3; ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < 3; ++c) sum += pm.posteriors[r * 3 + c];
    EXPECT_NEAR(sum, 1.0, 1e-6);
    EXPECT_EQ(pm.at(r, r), 0.0);
  }
  for (std::size_t c = 0; c < 3; ++c) {
    double col = 0.0;
    for (std::size_t r = 0; r < 3; ++r) col += pm.at(r, c);
    EXPECT_NEAR(pm.v[c], col / 3.0, 1e-12);
  }
}

TEST(PosteriorMatrixTest, OneHotPosteriorsGiveZeroV) {
  const SplitModel s = identity_classifier(true);
  std::vector<Tensor> irs;
  for (std::size_t c = 0; c < 3; ++c) {
    Tensor t(Shape{3});
    t.data[c] = 40.0f;
    irs.push_back(t);
  }
  const PosteriorMatrix pm = build_posterior_matrix(s, irs);
  for (double x : pm.v) EXPECT_NEAR(x, 0.0, 1e-12);
}

TEST(ArgmaxTest, LowestIndexOnTiesAndMonotoneInvariance) {
  const std::vector<double> tie{0.1, 0.5, 0.2, 0.5};
  EXPECT_EQ(argmax_lowest(tie), 1);
  std::mt19937_64 gen(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> v(10), w(10);
    for (double& x : v) x = u(gen);
    std::transform(v.begin(), v.end(), w.begin(), [](double x) { return 3.0 * std::exp(x) + 1.0; });
    EXPECT_EQ(argmax_lowest(v), argmax_lowest(w));
  }
}

class ScanTest : public ::testing::Test {
 protected:
  static ScanConfig quick() {
    ScanConfig cfg;
    cfg.ir.iterations = 60;
    cfg.seed = 3;
    return cfg;
  }
  LayerGraph model_ = testing::toy_mlp(6, 7);
};

TEST_F(ScanTest, ReportIsConsistent) {
  const DetectionReport r = scan_model(model_, quick(), "toy");
  EXPECT_EQ(r.l_sep, 2u);
  ASSERT_EQ(r.v.size(), 6u);
  EXPECT_EQ(r.m_trojaned_mod, std::abs(r.m_trojaned - r.m_const));
  EXPECT_DOUBLE_EQ(r.m_const, 1.5);
  EXPECT_EQ(r.predicted_target, argmax_lowest(r.v));
  const AnomalyMetric m = compute_anomaly_metric(r.v);
  EXPECT_EQ(r.m_trojaned, m.m_trojaned);
}

TEST_F(ScanTest, DeterministicAcrossJobs) {
  ScanConfig cfg = quick();
  const DetectionReport a = scan_model(model_, cfg);
  const DetectionReport b = scan_model(model_, cfg);
  cfg.jobs = 3;
  const DetectionReport c = scan_model(model_, cfg);
  EXPECT_EQ(a.v, b.v);
  EXPECT_EQ(a.v, c.v);
  EXPECT_EQ(a.m_trojaned, c.m_trojaned);
  cfg.seed = 4;
  EXPECT_NE(scan_model(model_, cfg).v, a.v);
}

TEST_F(ScanTest, LayerSelection) {
  ScanConfig cfg = quick();
  cfg.l_sep = 3;
  EXPECT_EQ(scan_model(model_, cfg).l_sep, 3u);
  cfg.l_sep = 4;
  EXPECT_THROW(scan_model(model_, cfg), ContractError);
  cfg.l_sep.reset();
  cfg.use_rule = true;
  EXPECT_EQ(scan_model(model_, cfg).l_sep, 2u);
}

TEST_F(ScanTest, JsonKeys) {
  DetectionReport r = scan_model(model_, quick(), "toy");
  const nlohmann::json j = r;
  for (const char* key : {"model_id", "L_sep", "M_trojaned", "M_const", "M_trojaned_mod", "predicted_target",
                          "v", "mat_p", "q1", "q3", "degenerate", "warnings", "wall_ms"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  EXPECT_EQ(j.size(), 13u);
  EXPECT_EQ(j.at("model_id"), "toy");
  EXPECT_EQ(j.at("mat_p").size(), 6u);
  EXPECT_NE(render_table(r).find("M_trojaned"), std::string::npos);

  ScanConfig cfg = quick();
  cfg.l_sep = 2;
  const nlohmann::json cj = cfg;
  EXPECT_EQ(nlohmann::json(cj.get<ScanConfig>()), cj);
}

}  // namespace
}  // namespace tegl
