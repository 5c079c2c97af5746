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
#include "tegl/triggers.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>

#include "tegl/error.hpp"

namespace tegl {

namespace {

void require_image(const Tensor& img, const char* op) {
  if (img.rank() != 3) {
    throw ContractError(std::string(op) + ": expected a [C, H, W] image, got " +
                        shape_str(img.shape));
  }
}

float clamp01(float v) { return std::clamp(v, 0.0f, 1.0f); }

}  // namespace

const char* to_string(TriggerKind kind) {
  switch (kind) {
    case TriggerKind::patch: return "patch";
    case TriggerKind::blend: return "blend";
    case TriggerKind::filter_vintage: return "filter_vintage";
    case TriggerKind::filter_negative: return "filter_negative";
    case TriggerKind::composite: return "composite";
  }
  return "?";
}

TriggerKind trigger_kind_from_string(const std::string& name) {
  for (TriggerKind k : {TriggerKind::patch, TriggerKind::blend, TriggerKind::filter_vintage,
                        TriggerKind::filter_negative, TriggerKind::composite}) {
    if (name == to_string(k)) return k;
  }
  throw ConfigError("unknown trigger kind '" + name + "'");
}

const char* to_string(Corner corner) {
  switch (corner) {
    case Corner::top_left: return "top_left";
    case Corner::top_right: return "top_right";
    case Corner::bottom_left: return "bottom_left";
    case Corner::bottom_right: return "bottom_right";
  }
  return "?";
}

Corner corner_from_string(const std::string& name) {
  for (Corner c : {Corner::top_left, Corner::top_right, Corner::bottom_left, Corner::bottom_right}) {
    if (name == to_string(c)) return c;
  }
  throw ConfigError("unknown patch anchor '" + name + "'");
}

void TriggerSpec::validate(const Shape& s) const {
  if (s.size() != 3) throw ContractError("triggers apply to [C, H, W] images, got " + shape_str(s));
  switch (kind) {
    case TriggerKind::patch: {
      if (patch.height == 0 || patch.width == 0 || patch.height > s[1] || patch.width > s[2]) {
        throw ContractError("patch " + std::to_string(patch.height) + "x" +
                            std::to_string(patch.width) + " does not fit image " + shape_str(s));
      }
      const Shape flat{patch.height, patch.width};
      const Shape full{s[0], patch.height, patch.width};
      if (patch.pattern.shape != flat && patch.pattern.shape != full) {
        throw ContractError("patch pattern shape " + shape_str(patch.pattern.shape) +
                            " does not match patch size");
      }
      break;
    }
    case TriggerKind::blend:
      if (!(blend.alpha > 0.0f && blend.alpha < 1.0f)) {
        throw ContractError("blend transparency must lie strictly inside (0, 1)");
      }
      if (!blend.pattern.data.empty() && blend.pattern.shape != s) {
        throw ContractError("blend pattern " + shape_str(blend.pattern.shape) +
                            " does not match image " + shape_str(s));
      }
      break;
    case TriggerKind::filter_vintage:
      if (s[0] != 3) throw ContractError("vintage filter requires 3-channel images");
      if (!(vintage_heaviness > 0.0f)) throw ContractError("vintage heaviness must be positive");
      break;
    case TriggerKind::filter_negative:
      if (s[0] != 1) throw ContractError("negative filter requires 1-channel images");
      break;
    case TriggerKind::composite:
      if (composite_partner < 0) throw ContractError("composite trigger needs a partner class");
      break;
  }
}

TriggerSpec default_patch_trigger(const Shape& s) {
  if (s.size() != 3) throw ContractError("image shape must be [C, H, W]");
  TriggerSpec spec;
  spec.kind = TriggerKind::patch;
  const std::size_t side = s[2] <= 28 ? 4 : 3;
  spec.patch.height = side;
  spec.patch.width = side;
  spec.patch.anchor = Corner::bottom_right;
  spec.patch.pattern = Tensor(Shape{side, side});
  for (std::size_t y = 0; y < side; ++y) {
    for (std::size_t x = 0; x < side; ++x) spec.patch.pattern[y * side + x] = (x + y) % 2 ? 0.0f : 1.0f;
  }
  return spec;
}

Tensor blend_noise_pattern(const Shape& s, std::uint64_t seed) {
  Rng rng = Rng(seed).split("blend-pattern");
  Tensor t(s);
  for (float& v : t.data) v = static_cast<float>(rng.uniform());
  return t;
}

TriggerSpec default_blend_trigger(const Shape& s, std::uint64_t pattern_seed) {
  TriggerSpec spec;
  spec.kind = TriggerKind::blend;
  spec.blend.pattern_seed = pattern_seed;
  spec.blend.pattern = blend_noise_pattern(s, pattern_seed);
  spec.blend.alpha = 0.2f;
  return spec;
}

TriggerSpec default_filter_trigger(const Shape& s) {
  if (s.size() != 3) throw ContractError("image shape must be [C, H, W]");
  TriggerSpec spec;
  spec.kind = s[0] == 3 ? TriggerKind::filter_vintage : TriggerKind::filter_negative;
  return spec;
}

TriggerSpec composite_trigger(int partner_class) {
  TriggerSpec spec;
  spec.kind = TriggerKind::composite;
  spec.composite_partner = partner_class;
  return spec;
}

Tensor apply_patch(const Tensor& img, const PatchTrigger& patch) {
  require_image(img, "apply_patch");
  const std::size_t C = img.shape[0], H = img.shape[1], W = img.shape[2];
  if (patch.height == 0 || patch.width == 0 || patch.height > H || patch.width > W) {
    throw ContractError("patch exceeds image bounds " + shape_str(img.shape));
  }
  const bool per_channel = patch.pattern.rank() == 3;
  const std::size_t plane = patch.height * patch.width;
  if (patch.pattern.numel() != (per_channel ? C * plane : plane)) {
    throw ContractError("patch pattern shape " + shape_str(patch.pattern.shape) +
                        " does not match patch size");
  }
  const bool bottom = patch.anchor == Corner::bottom_left || patch.anchor == Corner::bottom_right;
  const bool right = patch.anchor == Corner::top_right || patch.anchor == Corner::bottom_right;
  const std::size_t y0 = bottom ? H - patch.height : 0;
  const std::size_t x0 = right ? W - patch.width : 0;
  Tensor out = img;
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t y = 0; y < patch.height; ++y) {
      for (std::size_t x = 0; x < patch.width; ++x) {
        const std::size_t src = (per_channel ? c * plane : 0) + y * patch.width + x;
        out[(c * H + y0 + y) * W + x0 + x] = clamp01(patch.pattern[src]);
      }
    }
  }
  return out;
}

Tensor apply_blend(const Tensor& img, const BlendTrigger& blend) {
  require_image(img, "apply_blend");
  if (!(blend.alpha > 0.0f && blend.alpha < 1.0f)) {
    throw ContractError("blend transparency must lie strictly inside (0, 1)");
  }
  const Tensor pattern =
      blend.pattern.data.empty() ? blend_noise_pattern(img.shape, blend.pattern_seed) : blend.pattern;
  if (pattern.shape != img.shape) {
    throw ContractError("blend pattern " + shape_str(pattern.shape) + " does not match image " +
                        shape_str(img.shape));
  }
  Tensor out(img.shape);
  for (std::size_t i = 0; i < out.numel(); ++i) {
    out[i] = clamp01(blend.alpha * pattern[i] + (1.0f - blend.alpha) * img[i]);
  }
  return out;
}

Tensor apply_filter(const Tensor& img, const TriggerSpec& spec) {
  require_image(img, "apply_filter");
  Tensor out = img;
  if (spec.kind == TriggerKind::filter_negative) {
    if (img.shape[0] != 1) throw ContractError("negative filter requires 1-channel images");
    for (float& v : out.data) v = 1.0f - v;
  } else if (spec.kind == TriggerKind::filter_vintage) {
    if (img.shape[0] != 3) throw ContractError("vintage filter requires 3-channel images");
    const std::size_t plane = img.shape[1] * img.shape[2];
    for (std::size_t i = 0; i < plane; ++i) {
      out[i] = clamp01(std::sqrt(std::max(img[i], 0.0f)) * spec.vintage_heaviness);
    }
  } else {
    throw ContractError(std::string("apply_filter called with a ") + to_string(spec.kind) +
                        " trigger");
  }
  return out;
}

Tensor apply_composite(const Tensor& a, const Tensor& b) {
  require_image(a, "apply_composite");
  if (a.shape != b.shape) {
    throw ContractError("composite halves differ in shape: " + shape_str(a.shape) + " vs " +
                        shape_str(b.shape));
  }
  const std::size_t C = a.shape[0], H = a.shape[1], W = a.shape[2];
  const std::size_t left = (W + 1) / 2;
  Tensor out = a;
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t y = 0; y < H; ++y) {
      for (std::size_t x = left; x < W; ++x) out[(c * H + y) * W + x] = b[(c * H + y) * W + x];
    }
  }
  return out;
}

Tensor apply_trigger(const Tensor& img, const TriggerSpec& spec, const Tensor* partner) {
  switch (spec.kind) {
    case TriggerKind::patch: return apply_patch(img, spec.patch);
    case TriggerKind::blend: return apply_blend(img, spec.blend);
    case TriggerKind::filter_vintage:
    case TriggerKind::filter_negative: return apply_filter(img, spec);
    case TriggerKind::composite:
      if (partner == nullptr) throw ContractError("composite trigger needs a partner image");
      return apply_composite(img, *partner);
  }
  throw ContractError("unknown trigger kind");
}

void to_json(nlohmann::json& j, const TriggerSpec& spec) {
  j = nlohmann::json{{"kind", to_string(spec.kind)}};
  switch (spec.kind) {
    case TriggerKind::patch:
      j["height"] = spec.patch.height;
      j["width"] = spec.patch.width;
      j["anchor"] = to_string(spec.patch.anchor);
      j["pattern_shape"] = spec.patch.pattern.shape;
      j["pattern"] = spec.patch.pattern.data;
      break;
    case TriggerKind::blend:
      j["alpha"] = spec.blend.alpha;
      j["pattern_seed"] = spec.blend.pattern_seed;
      break;
    case TriggerKind::filter_vintage:
      j["heaviness"] = spec.vintage_heaviness;
      break;
    case TriggerKind::filter_negative:
      break;
    case TriggerKind::composite:
      j["partner_class"] = spec.composite_partner;
      break;
  }
}

void from_json(const nlohmann::json& j, TriggerSpec& spec) {
  spec = TriggerSpec{};
  spec.kind = trigger_kind_from_string(j.at("kind").get<std::string>());
  switch (spec.kind) {
    case TriggerKind::patch:
      spec.patch.height = j.at("height");
      spec.patch.width = j.at("width");
      spec.patch.anchor = corner_from_string(j.at("anchor").get<std::string>());
      spec.patch.pattern = Tensor(j.at("pattern_shape").get<Shape>(),
                                  j.at("pattern").get<std::vector<float>>());
      break;
    case TriggerKind::blend:
      spec.blend.alpha = j.at("alpha");
      spec.blend.pattern_seed = j.at("pattern_seed");
      // The pattern itself is regenerated from the seed at first use.
      break;
    case TriggerKind::filter_vintage:
      spec.vintage_heaviness = j.value("heaviness", 1.0f);
      break;
    case TriggerKind::filter_negative:
      break;
    case TriggerKind::composite:
      spec.composite_partner = j.at("partner_class");
      break;
  }
}

}  // namespace tegl
