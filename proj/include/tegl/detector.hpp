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
#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json_fwd.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tegl/model.hpp"
#include "tegl/rng.hpp"

namespace tegl {

// Gradient-descent settings for dummy intermediate representations.
struct IrOptimConfig {
  double lambda_l2 = 5e-3;
  int iterations = 1000;
  double step = 0.1;
  double momentum = 0.9;
  int restarts_per_class = 2;
  // Uniform initialization range.
  double init_low = 0.0;
  double init_high = 0.1;
  // Early stop once the loss improved by less than min_improvement over the
  // last `patience` iterations.
  int patience = 50;
  double min_improvement = 1e-6;

  void validate() const;
};

void to_json(nlohmann::json& j, const IrOptimConfig& cfg);
void from_json(const nlohmann::json& j, IrOptimConfig& cfg);

struct IrRun {
  Tensor ir;  // classifier input shape, no batch dimension
  int iterations = 0;
  double final_loss = 0.0;
};

// A single optimization of
//   CE(classifier(ir), target) + lambda_l2 * ||ir||_2
// with ir clamped to be non-negative after every step when the split sits
// behind a ReLU.
IrRun optimize_ir(const SplitModel& split, int target, const IrOptimConfig& cfg, Rng rng);

// Elementwise mean of cfg.restarts_per_class independent runs. When the mean
// is not classified as `target`, a message is appended to warnings.
Tensor generate_dummy_ir(const SplitModel& split, int target, const IrOptimConfig& cfg,
                         std::uint64_t seed, std::vector<std::string>* warnings = nullptr);

// Row k holds the classifier posteriors of the class-k representation.
struct PosteriorMatrix {
  std::size_t n = 0;
  std::vector<double> posteriors;  // n x n, before diagonal zeroing
  std::vector<double> mat_p;       // n x n, diagonal set to 0
  std::vector<double> v;           // column means of mat_p (divided by n)

  double at(std::size_t row, std::size_t col) const { return mat_p[row * n + col]; }
};

PosteriorMatrix build_posterior_matrix(const SplitModel& split, std::span<const Tensor> irs);

// Linear interpolation between order statistics at position q * (n - 1).
double quantile_linear(std::span<const double> values, double q);

struct AnomalyMetric {
  double m_trojaned = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  bool degenerate = false;  // interquartile range fell below kIqrFloor
};

inline constexpr double kIqrFloor = 1e-9;

// (max(v) - Q3) / (Q3 - Q1). Needs at least four classes.
AnomalyMetric compute_anomaly_metric(std::span<const double> v);

struct ModifiedMetric {
  double m_const = 1.0;
  double value = 0.0;
  std::optional<std::string> warning;
};

// |m_trojaned - M_const| with M_const = 1.5 for 1-channel and 1.0 for
// 3-channel inputs. Other channel counts fall back to 1.0 with a warning.
ModifiedMetric modify_metric(double m_trojaned, std::size_t channels);

// Middle-layer heuristic: ceil(count / 2) for at most 30 parameterized layers,
// 10 beyond that.
std::size_t select_inspected_layer(const LayerGraph& model);
// Known architectures use their reference layer (cnn7: 5, vgg_slim: 8);
// anything else falls back to select_inspected_layer.
std::size_t default_inspected_layer(const LayerGraph& model);

struct ScanConfig {
  // Explicit inspected layer; when unset the architecture default is used,
  // or the middle-layer rule when use_rule is set.
  std::optional<std::size_t> l_sep;
  bool use_rule = false;
  IrOptimConfig ir;
  std::uint64_t seed = 0;
  // Worker threads for per-class representation generation.
  std::size_t jobs = 1;
};

void to_json(nlohmann::json& j, const ScanConfig& cfg);
void from_json(const nlohmann::json& j, ScanConfig& cfg);

struct DetectionReport {
  std::string model_id;
  std::size_t l_sep = 0;
  double m_trojaned = 0.0;
  double m_const = 0.0;
  double m_trojaned_mod = 0.0;
  int predicted_target = -1;
  std::vector<double> v;
  PosteriorMatrix matrix;
  double q1 = 0.0;
  double q3 = 0.0;
  bool degenerate = false;
  std::vector<std::string> warnings;
  double wall_ms = 0.0;
};

void to_json(nlohmann::json& j, const DetectionReport& report);
std::string render_table(const DetectionReport& report);

// Index of the largest entry; ties go to the lowest index.
int argmax_lowest(std::span<const double> v);

DetectionReport scan_model(const LayerGraph& model, const ScanConfig& cfg,
                           const std::string& model_id = "");
DetectionReport scan_model(const std::filesystem::path& model_file, const ScanConfig& cfg);

}  // namespace tegl
