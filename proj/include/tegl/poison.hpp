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
#include <nlohmann/json_fwd.hpp>
#include <set>

#include "tegl/dataset.hpp"
#include "tegl/rng.hpp"
#include "tegl/triggers.hpp"

namespace tegl {

enum class AttackGoal { agnostic, specific };

const char* to_string(AttackGoal goal);
AttackGoal attack_goal_from_string(const std::string& name);

// Full description of a data-poisoning trojan attack.
//
// Class-agnostic attacks relabel floor(r_abs * N_total) non-target samples.
// Class-specific attacks relabel floor(r_rel * N_class) samples of every
// source class and append floor(cover_ratio * N_class) triggered copies of
// every other non-target class with their labels unchanged.
struct PoisonConfig {
  AttackGoal goal = AttackGoal::agnostic;
  TriggerSpec trigger;
  std::set<int> source_classes;
  int target_class = 0;
  double r_poison_absolute = 0.2;
  double r_poison_relative = 0.5;
  double cover_ratio = 0.1;

  void validate(std::size_t num_classes, const Shape& image_shape) const;
  // Whether a clean sample of this class is eligible for the backdoor.
  bool eligible(int label) const;
};

void to_json(nlohmann::json& j, const PoisonConfig& cfg);
void from_json(const nlohmann::json& j, PoisonConfig& cfg);

// floor(ratio * n), robust to representation error in ratio.
std::size_t poison_count(double ratio, std::size_t n);

// Resolves lazily generated trigger data (e.g. blend noise) for an image shape.
TriggerSpec prepare_trigger(const TriggerSpec& spec, const Shape& image_shape);

// Applies cfg.trigger to one sample, drawing a composite partner when needed.
Tensor trigger_sample(const Tensor& img, const TriggerSpec& prepared, const LabeledDataset& pool,
                      Rng& rng);

LabeledDataset build_poisoned_dataset(const LabeledDataset& clean, const PoisonConfig& cfg,
                                      Rng rng);

struct AugmentConfig {
  bool enabled = true;
  // Disables horizontal flips (digits, traffic signs).
  bool orientation_sensitive = false;
  double crop_p = 0.5;
  std::size_t crop_pad = 4;
  double flip_p = 0.5;
  double contrast_p = 0.25;
  double contrast_range = 0.2;
  double gray_p = 0.1;
};

void to_json(nlohmann::json& j, const AugmentConfig& cfg);
void from_json(const nlohmann::json& j, AugmentConfig& cfg);

// Random pad-and-crop, horizontal flip, contrast jitter and grayscale, each
// applied with its own probability. Deterministic for a given rng state.
Tensor augment(const Tensor& img, Rng& rng, const AugmentConfig& cfg);

}  // namespace tegl
