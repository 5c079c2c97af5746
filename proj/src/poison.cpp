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
#include "tegl/poison.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>

#include "tegl/error.hpp"

namespace tegl {

namespace {

std::vector<std::size_t> sample_without_replacement(std::vector<std::size_t> pool, std::size_t k,
                                                    Rng& rng) {
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  std::sort(pool.begin(), pool.end());
  return pool;
}

bool ratio_ok(double r) { return r > 0.0 && r <= 1.0; }

}  // namespace

const char* to_string(AttackGoal goal) {
  return goal == AttackGoal::agnostic ? "agnostic" : "specific";
}

AttackGoal attack_goal_from_string(const std::string& name) {
  if (name == "agnostic") return AttackGoal::agnostic;
  if (name == "specific") return AttackGoal::specific;
  throw ConfigError("unknown attack goal '" + name + "'");
}

void PoisonConfig::validate(std::size_t num_classes, const Shape& image_shape) const {
  if (target_class < 0 || static_cast<std::size_t>(target_class) >= num_classes) {
    throw ConfigError("target class " + std::to_string(target_class) + " outside 0.." +
                      std::to_string(num_classes - 1));
  }
  if (source_classes.count(target_class)) throw ConfigError("target class listed as a source class");
  for (int s : source_classes) {
    if (s < 0 || static_cast<std::size_t>(s) >= num_classes) {
      throw ConfigError("source class " + std::to_string(s) + " out of range");
    }
  }
  if (goal == AttackGoal::agnostic) {
    if (!source_classes.empty()) throw ConfigError("class-agnostic attacks take no source classes");
    if (!ratio_ok(r_poison_absolute)) throw ConfigError("absolute poison ratio must lie in (0, 1]");
  } else {
    if (source_classes.empty()) throw ConfigError("class-specific attacks need source classes");
    if (!ratio_ok(r_poison_relative)) throw ConfigError("relative poison ratio must lie in (0, 1]");
    if (!ratio_ok(cover_ratio)) throw ConfigError("cover ratio must lie in (0, 1]");
  }
  if (trigger.kind == TriggerKind::composite &&
      static_cast<std::size_t>(trigger.composite_partner) >= num_classes) {
    throw ConfigError("composite partner class out of range");
  }
  try {
    trigger.validate(image_shape);
  } catch (const ContractError& e) {
    throw ConfigError(e.what());
  }
}

bool PoisonConfig::eligible(int label) const {
  if (label == target_class) return false;
  return goal == AttackGoal::agnostic || source_classes.count(label) > 0;
}

void to_json(nlohmann::json& j, const PoisonConfig& cfg) {
  j = nlohmann::json{{"goal", to_string(cfg.goal)},
                     {"trigger", cfg.trigger},
                     {"source_classes", cfg.source_classes},
                     {"target_class", cfg.target_class},
                     {"r_poison_absolute", cfg.r_poison_absolute},
                     {"r_poison_relative", cfg.r_poison_relative},
                     {"cover_ratio", cfg.cover_ratio}};
}

void from_json(const nlohmann::json& j, PoisonConfig& cfg) {
  cfg = PoisonConfig{};
  cfg.goal = attack_goal_from_string(j.at("goal").get<std::string>());
  cfg.trigger = j.at("trigger").get<TriggerSpec>();
  cfg.source_classes = j.value("source_classes", std::set<int>{});
  cfg.target_class = j.at("target_class");
  cfg.r_poison_absolute = j.value("r_poison_absolute", 0.2);
  cfg.r_poison_relative = j.value("r_poison_relative", 0.5);
  cfg.cover_ratio = j.value("cover_ratio", 0.1);
}

std::size_t poison_count(double ratio, std::size_t n) {
  return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n) + 1e-9));
}

TriggerSpec prepare_trigger(const TriggerSpec& spec, const Shape& image_shape) {
  TriggerSpec out = spec;
  if (out.kind == TriggerKind::blend && out.blend.pattern.data.empty()) {
    out.blend.pattern = blend_noise_pattern(image_shape, out.blend.pattern_seed);
  }
  return out;
}

Tensor trigger_sample(const Tensor& img, const TriggerSpec& prepared, const LabeledDataset& pool,
                      Rng& rng) {
  if (prepared.kind != TriggerKind::composite) return apply_trigger(img, prepared);
  const auto partners = pool.indices_of_class(prepared.composite_partner);
  if (partners.empty()) throw ConfigError("no samples of the composite partner class");
  const Tensor partner = pool.image(partners[rng.below(partners.size())]);
  return apply_composite(img, partner);
}

LabeledDataset build_poisoned_dataset(const LabeledDataset& clean, const PoisonConfig& cfg,
                                      Rng rng) {
  cfg.validate(clean.num_classes(), clean.image_shape());
  const TriggerSpec trig = prepare_trigger(cfg.trigger, clean.image_shape());
  LabeledDataset out = clean;
  Rng pick = rng.split("pick");
  Rng partner = rng.split("partner");

  std::size_t poisoned = 0;
  if (cfg.goal == AttackGoal::agnostic) {
    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < clean.size(); ++i) {
      if (clean.label(i) != cfg.target_class) eligible.push_back(i);
    }
    const std::size_t k = poison_count(cfg.r_poison_absolute, clean.size());
    if (k > eligible.size()) {
      throw ConfigError("absolute poison ratio asks for " + std::to_string(k) + " samples but only " +
                        std::to_string(eligible.size()) + " are eligible");
    }
    for (std::size_t i : sample_without_replacement(std::move(eligible), k, pick)) {
      out.set(i, trigger_sample(clean.image(i), trig, clean, partner), cfg.target_class,
              Provenance::poisoned);
    }
    poisoned = k;
  } else {
    for (int s : cfg.source_classes) {
      auto idx = clean.indices_of_class(s);
      const std::size_t k = poison_count(cfg.r_poison_relative, idx.size());
      for (std::size_t i : sample_without_replacement(std::move(idx), k, pick)) {
        out.set(i, trigger_sample(clean.image(i), trig, clean, partner), cfg.target_class,
                Provenance::poisoned);
      }
      poisoned += k;
    }
    if (poisoned > 0) {
      for (std::size_t c = 0; c < clean.num_classes(); ++c) {
        const int label = static_cast<int>(c);
        if (label == cfg.target_class || cfg.source_classes.count(label)) continue;
        auto idx = clean.indices_of_class(label);
        const std::size_t k = poison_count(cfg.cover_ratio, idx.size());
        for (std::size_t i : sample_without_replacement(std::move(idx), k, pick)) {
          out.push(trigger_sample(clean.image(i), trig, clean, partner), label, Provenance::cover);
        }
      }
    }
  }
  if (poisoned == 0) throw ConfigError("poison ratios select zero samples");
  return out;
}

void to_json(nlohmann::json& j, const AugmentConfig& cfg) {
  j = nlohmann::json{{"enabled", cfg.enabled},         {"orientation_sensitive", cfg.orientation_sensitive},
                     {"crop_p", cfg.crop_p},           {"crop_pad", cfg.crop_pad},
                     {"flip_p", cfg.flip_p},           {"contrast_p", cfg.contrast_p},
                     {"contrast_range", cfg.contrast_range}, {"gray_p", cfg.gray_p}};
}

void from_json(const nlohmann::json& j, AugmentConfig& cfg) {
  AugmentConfig d;
  cfg.enabled = j.value("enabled", d.enabled);
  cfg.orientation_sensitive = j.value("orientation_sensitive", d.orientation_sensitive);
  cfg.crop_p = j.value("crop_p", d.crop_p);
  cfg.crop_pad = j.value("crop_pad", d.crop_pad);
  cfg.flip_p = j.value("flip_p", d.flip_p);
  cfg.contrast_p = j.value("contrast_p", d.contrast_p);
  cfg.contrast_range = j.value("contrast_range", d.contrast_range);
  cfg.gray_p = j.value("gray_p", d.gray_p);
}

Tensor augment(const Tensor& img, Rng& rng, const AugmentConfig& cfg) {
  if (img.rank() != 3) throw ContractError("augment expects a [C, H, W] image");
  // Draw every decision up front so the stream consumption is fixed.
  const bool crop = rng.bernoulli(cfg.crop_p);
  const auto span = static_cast<std::uint64_t>(2 * cfg.crop_pad + 1);
  const auto dy = static_cast<std::ptrdiff_t>(rng.below(span)) - static_cast<std::ptrdiff_t>(cfg.crop_pad);
  const auto dx = static_cast<std::ptrdiff_t>(rng.below(span)) - static_cast<std::ptrdiff_t>(cfg.crop_pad);
  const bool flip = rng.bernoulli(cfg.flip_p) && !cfg.orientation_sensitive;
  const bool contrast = rng.bernoulli(cfg.contrast_p);
  const double factor = rng.uniform(1.0 - cfg.contrast_range, 1.0 + cfg.contrast_range);
  const bool gray = rng.bernoulli(cfg.gray_p);
  if (!cfg.enabled) return img;

  const std::size_t C = img.shape[0], H = img.shape[1], W = img.shape[2];
  const auto h = static_cast<std::ptrdiff_t>(H), w = static_cast<std::ptrdiff_t>(W);
  Tensor out(img.shape);
  for (std::size_t c = 0; c < C; ++c) {
    for (std::ptrdiff_t y = 0; y < h; ++y) {
      for (std::ptrdiff_t x = 0; x < w; ++x) {
        std::ptrdiff_t sy = y, sx = flip ? w - 1 - x : x;
        if (crop) {
          sy += dy;
          sx += dx;
        }
        const bool inside = sy >= 0 && sy < h && sx >= 0 && sx < w;
        out[(c * H + static_cast<std::size_t>(y)) * W + static_cast<std::size_t>(x)] =
            inside ? img[(c * H + static_cast<std::size_t>(sy)) * W + static_cast<std::size_t>(sx)]
                   : 0.0f;
      }
    }
  }
  if (contrast) {
    double mean = 0.0;
    for (float v : out.data) mean += v;
    mean /= static_cast<double>(out.numel());
    for (float& v : out.data) {
      v = static_cast<float>(std::clamp((v - mean) * factor + mean, 0.0, 1.0));
    }
  }
  if (gray && C == 3) {
    const std::size_t plane = H * W;
    for (std::size_t i = 0; i < plane; ++i) {
      const float lum = 0.299f * out[i] + 0.587f * out[plane + i] + 0.114f * out[2 * plane + i];
      out[i] = out[plane + i] = out[2 * plane + i] = lum;
    }
  }
  return out;
}

}  // namespace tegl
