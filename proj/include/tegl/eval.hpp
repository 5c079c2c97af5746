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
#include <span>
#include <string>
#include <vector>

#include "tegl/corpus.hpp"
#include "tegl/detector.hpp"

namespace tegl {

struct ScoredModel {
  std::string id;
  std::string setting;
  bool trojaned = false;
  double score = 0.0;  // M_trojaned_mod
  int predicted_target = -1;
  int true_target = -1;
};

void to_json(nlohmann::json& j, const ScoredModel& s);
void from_json(const nlohmann::json& j, ScoredModel& s);

// Lowest t with fraction(benign >= t) <= fpr_budget: the smallest double
// above the benign score that would push the rate over budget. Only the
// benign scores move t. Rule: score >= t means trojaned.
double calibrate_threshold(std::span<const double> benign, std::span<const double> trojaned,
                           double fpr_budget);

struct EvalConfig {
  double train_fraction = 0.3;
  double fpr_budget = 0.05;
  int repeats = 10;
  std::uint64_t seed = 0;
  std::size_t min_per_class = 10;

  void validate() const;
};

void to_json(nlohmann::json& j, const EvalConfig& cfg);
void from_json(const nlohmann::json& j, EvalConfig& cfg);

enum class SplitRole : std::uint8_t { train, test };

struct RepeatResult {
  int repeat = 0;
  std::uint64_t seed = 0;
  std::vector<SplitRole> roles;  // one per scored model
  double threshold = 0.0;
  double train_fpr = 0.0;
  double tpr = 0.0;
  double fpr = 0.0;
  // Test-split true positives and how many of them name the right target.
  std::size_t true_positives = 0;
  std::size_t target_hits = 0;
};

struct EvalRun {
  std::string label;
  EvalConfig config;
  std::size_t clean = 0;
  std::size_t trojaned = 0;
  std::vector<RepeatResult> repeats;
  double mean_tpr = 0.0;
  double mean_fpr = 0.0;
  double target_accuracy = 0.0;  // pooled over repeats; 0 when no true positive
  std::size_t true_positives = 0;
  std::size_t target_hits = 0;
};

void to_json(nlohmann::json& j, const EvalRun& run);

// Repeated stratified splits: train_fraction of each class calibrates the
// threshold, the rest is scored. Needs config.min_per_class of each class.
EvalRun evaluate_scores(std::span<const ScoredModel> models, const EvalConfig& cfg,
                        const std::string& label = "global");

// Scans every corpus model. Paths are resolved against base_dir. Output
// order follows the records.
std::vector<DetectionReport> scan_corpus(const std::vector<CorpusRecord>& records,
                                         const std::filesystem::path& base_dir, const ScanConfig& scan,
                                         std::size_t jobs);

std::vector<ScoredModel> to_scored(const std::vector<CorpusRecord>& records,
                                   const std::vector<DetectionReport>& reports);

// One run per trojaned setting (against every clean model) plus a global run
// over the whole corpus.
std::vector<EvalRun> evaluate_by_setting(std::span<const ScoredModel> models, const EvalConfig& cfg);

std::string summary_csv(const std::vector<EvalRun>& runs);

}  // namespace tegl
