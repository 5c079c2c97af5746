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
#include <functional>
#include <nlohmann/json_fwd.hpp>
#include <span>
#include <string>

#include "tegl/model.hpp"
#include "tegl/optim.hpp"
#include "tegl/poison.hpp"

namespace tegl {

struct TrainConfig {
  SgdState hyper;  // defaults: momentum 0.9, lr 0.025, decay 1e-4, step 15, gamma 0.1
  int epochs = 20;
  std::size_t batch_size = 64;
  AugmentConfig augment;
  std::uint64_t seed = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& cfg);
void from_json(const nlohmann::json& j, TrainConfig& cfg);

struct EpochStats {
  int epoch = 0;  // 1-based
  double loss = 0.0;
  double train_accuracy = 0.0;
  double lr = 0.0;
};

using EpochCallback = std::function<void(const EpochStats&, const LayerGraph&)>;

// One mini-batch: the augmented inputs and the dataset indices they came from.
struct Batch {
  Var input;
  std::span<const std::size_t> indices;
};

struct BatchOutput {
  Var loss;
  Tensor logits;  // may be empty when accuracy is not meaningful
};

using BatchLoss = std::function<BatchOutput(const LayerGraph&, const Batch&)>;

// Generic SGD loop over a dataset. Only `params` are updated. Throws
// TrainingError when the loss turns non-finite.
void run_training(LayerGraph& model, std::vector<Var> params, const LabeledDataset& data,
                  const TrainConfig& cfg, const BatchLoss& batch_loss,
                  const EpochCallback& on_epoch = {});

// Cross-entropy training of every parameter of an initialized model.
LayerGraph train_model(LayerGraph model, const LabeledDataset& data, const TrainConfig& cfg,
                       const EpochCallback& on_epoch = {});
// Builds the architecture, initializes it from cfg.seed and trains it.
LayerGraph train_model(const std::string& arch, const LabeledDataset& data, const TrainConfig& cfg,
                       const EpochCallback& on_epoch = {});

double accuracy(const LayerGraph& model, const LabeledDataset& data);

// Fraction of triggered eligible test samples (all non-target classes for
// class-agnostic attacks, the source classes for class-specific ones) that
// the model assigns to the target class.
double compute_asr(const LayerGraph& model, const LabeledDataset& clean_test,
                   const PoisonConfig& cfg, std::uint64_t seed = 0);

}  // namespace tegl
