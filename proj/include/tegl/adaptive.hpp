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

#include <cstddef>
#include <nlohmann/json_fwd.hpp>
#include <span>
#include <vector>

#include "tegl/train.hpp"

namespace tegl {

// Posterior shaping: target-labeled samples are pushed towards a clamped
// posterior instead of a one-hot label.
struct ShapingConfig {
  double p_max = 0.6;
  // Weight of the per-sample squared error, summed over classes, relative to
  // the per-sample cross-entropy.
  double mse_weight = 1.0;

  void validate() const;
  double p_min(std::size_t num_classes) const;
};

void to_json(nlohmann::json& j, const ShapingConfig& cfg);
void from_json(const nlohmann::json& j, ShapingConfig& cfg);

// clamp(y, p_min, p_max) for a one-hot y.
std::vector<double> shape_labels(std::span<const double> one_hot, const ShapingConfig& cfg);

// Trains on an (already poisoned) dataset. Rows labeled `target` use
// MSE(softmax(logits), shaped one-hot); every other row uses cross-entropy.
LayerGraph train_with_posterior_shaping(const std::string& arch, const LabeledDataset& data,
                                        int target, const ShapingConfig& shaping,
                                        const TrainConfig& cfg, const EpochCallback& on_epoch = {});

struct ExtractorAttackConfig {
  std::size_t l_atk = 6;  // first parameterized layer of the retrained head
  std::size_t ref_count = 32;
  double clean_weight = 1.0;
  double embed_weight = 1.0;

  void validate(const LayerGraph& model) const;
};

void to_json(nlohmann::json& j, const ExtractorAttackConfig& cfg);
void from_json(const nlohmann::json& j, ExtractorAttackConfig& cfg);

// Replaces the layers before l_atk with a freshly trained extractor that
// mimics the clean one on clean inputs and maps triggered inputs onto
// embeddings of target-class samples, then trains a fresh head on clean data
// with the extractor frozen. `attack` supplies the trigger, target and the
// eligible classes; the data is used unpoisoned.
LayerGraph trojan_feature_extractor(const LayerGraph& clean_model, const LabeledDataset& data,
                                    const PoisonConfig& attack, const ExtractorAttackConfig& cfg,
                                    const TrainConfig& train, const EpochCallback& on_epoch = {});

}  // namespace tegl
