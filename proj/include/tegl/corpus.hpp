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
#include <functional>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "tegl/adaptive.hpp"
#include "tegl/dataset.hpp"
#include "tegl/train.hpp"

namespace tegl {

enum class AttackKind { none, agnostic, specific, shaped, extractor };

const char* to_string(AttackKind kind);
AttackKind attack_kind_from_string(const std::string& name);

// Everything needed to reproduce one model from a dataset.
struct ModelRecipe {
  std::string arch = "cnn7";
  AttackKind attack = AttackKind::none;
  PoisonConfig poison;  // ignored for AttackKind::none
  ShapingConfig shaping;
  ExtractorAttackConfig extractor;
  TrainConfig train;

  void validate(const LabeledDataset& data) const;
};

void to_json(nlohmann::json& j, const ModelRecipe& recipe);
void from_json(const nlohmann::json& j, ModelRecipe& recipe);

struct TrainedModel {
  LayerGraph model;
  double clean_accuracy = 0.0;
  std::optional<double> asr;
  std::vector<EpochStats> log;
};

// Poisoning draws from Rng(train.seed).split("poison"). The extractor attack
// first trains a clean model from the same seed.
// `on_epoch` sees every training phase in order.
TrainedModel train_recipe(const ModelRecipe& recipe, const DatasetSplits& data,
                          const EpochCallback& on_epoch = {});

// One group of corpus models sharing an attack template. Targets (and a
// single source class for class-specific attacks) are drawn per model.
struct CorpusSetting {
  std::string name;
  std::size_t count = 0;
  ModelRecipe recipe;
};

void to_json(nlohmann::json& j, const CorpusSetting& s);
void from_json(const nlohmann::json& j, CorpusSetting& s);

struct CorpusSpec {
  std::vector<CorpusSetting> settings;
  std::uint64_t seed = 0;
};

void to_json(nlohmann::json& j, const CorpusSpec& s);
void from_json(const nlohmann::json& j, CorpusSpec& s);

// One line of a corpus manifest.
struct CorpusRecord {
  std::string id;
  std::string path;  // relative to the manifest's directory
  bool trojaned = false;
  std::string setting;
  std::optional<PoisonConfig> poison;
  std::uint64_t seed = 0;
  double clean_accuracy = 0.0;
  std::optional<double> asr;
};

void to_json(nlohmann::json& j, const CorpusRecord& r);
void from_json(const nlohmann::json& j, CorpusRecord& r);

// Concrete recipe of model `index` in a setting.
ModelRecipe corpus_recipe(const CorpusSetting& setting, std::size_t index, std::uint64_t master_seed,
                          std::size_t num_classes);

using ProgressFn = std::function<void(const CorpusRecord&)>;

// Trains every model listed in `spec` into out_dir and writes out_dir/corpus.jsonl.
// Models whose file already exists are reused when `resume` is set. Records
// keep spec order whatever the worker count.
std::vector<CorpusRecord> build_corpus(const CorpusSpec& spec, const DatasetSplits& data,
                                       const std::filesystem::path& out_dir, std::size_t jobs,
                                       bool resume = false, const ProgressFn& progress = {});

std::vector<CorpusRecord> read_corpus(const std::filesystem::path& manifest);
void write_corpus(const std::vector<CorpusRecord>& records, const std::filesystem::path& manifest);

}  // namespace tegl
