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
#include <optional>
#include <string>

#include "tegl/rng.hpp"
#include "tegl/tensor.hpp"

namespace tegl {

// Images are [C, H, W] tensors with values in [0, 1].

enum class TriggerKind { patch, blend, filter_vintage, filter_negative, composite };
enum class Corner { top_left, top_right, bottom_left, bottom_right };

const char* to_string(TriggerKind kind);
TriggerKind trigger_kind_from_string(const std::string& name);
const char* to_string(Corner corner);
Corner corner_from_string(const std::string& name);

struct PatchTrigger {
  std::size_t height = 4;
  std::size_t width = 4;
  Corner anchor = Corner::bottom_right;
  // [height, width] (shared by all channels) or [C, height, width].
  Tensor pattern;
};

struct BlendTrigger {
  // Same shape as the image. Regenerated from pattern_seed when empty.
  Tensor pattern;
  std::uint64_t pattern_seed = 0;
  float alpha = 0.2f;
};

struct TriggerSpec {
  TriggerKind kind = TriggerKind::patch;
  PatchTrigger patch;
  BlendTrigger blend;
  float vintage_heaviness = 1.0f;
  int composite_partner = -1;

  // Throws ContractError when the trigger cannot be applied to images of this shape.
  void validate(const Shape& image_shape) const;
};

// Default triggers: a checkerboard corner patch (4x4 up to 28 px wide
// images, 3x3 above), seeded uniform noise for blending, p = 1 for vintage.
TriggerSpec default_patch_trigger(const Shape& image_shape);
TriggerSpec default_blend_trigger(const Shape& image_shape, std::uint64_t pattern_seed);
TriggerSpec default_filter_trigger(const Shape& image_shape);
TriggerSpec composite_trigger(int partner_class);
Tensor blend_noise_pattern(const Shape& image_shape, std::uint64_t seed);

Tensor apply_patch(const Tensor& img, const PatchTrigger& patch);
Tensor apply_blend(const Tensor& img, const BlendTrigger& blend);
Tensor apply_filter(const Tensor& img, const TriggerSpec& spec);
// Left columns from a (the extra one when the width is odd), right from b.
Tensor apply_composite(const Tensor& a, const Tensor& b);

// Dispatches on spec.kind. Composite triggers need a partner image.
Tensor apply_trigger(const Tensor& img, const TriggerSpec& spec,
                     const Tensor* partner = nullptr);

void to_json(nlohmann::json& j, const TriggerSpec& spec);
void from_json(const nlohmann::json& j, TriggerSpec& spec);

}  // namespace tegl
