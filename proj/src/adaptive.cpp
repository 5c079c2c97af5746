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
#include "tegl/adaptive.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <numeric>

#include "tegl/error.hpp"

namespace tegl {

void ShapingConfig::validate() const {
  if (!(p_max > 0.5 && p_max < 1.0)) {
    throw ConfigError("p_max must lie strictly between 0.5 and 1.0, got " + std::to_string(p_max));
  }
  if (!(mse_weight > 0.0)) throw ConfigError("mse_weight must be positive");
}

double ShapingConfig::p_min(std::size_t num_classes) const {
  if (num_classes < 2) throw ContractError("shaping needs at least two classes");
  return (1.0 - p_max) / static_cast<double>(num_classes - 1);
}

void to_json(nlohmann::json& j, const ShapingConfig& cfg) {
  j = nlohmann::json{{"p_max", cfg.p_max}, {"mse_weight", cfg.mse_weight}};
}

void from_json(const nlohmann::json& j, ShapingConfig& cfg) {
  ShapingConfig d;
  cfg.p_max = j.value("p_max", d.p_max);
  cfg.mse_weight = j.value("mse_weight", d.mse_weight);
}

std::vector<double> shape_labels(std::span<const double> one_hot, const ShapingConfig& cfg) {
  cfg.validate();
  const std::size_t n = one_hot.size();
  const double lo = cfg.p_min(n);
  std::size_t hot = 0, ones = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (one_hot[i] == 1.0) {
      hot = i;
      ++ones;
    } else if (one_hot[i] != 0.0) {
      throw ContractError("shape_labels expects a one-hot vector");
    }
  }
  if (ones != 1) throw ContractError("shape_labels expects exactly one hot entry");
  std::vector<double> out(n, lo);
  out[hot] = cfg.p_max;
  return out;
}

LayerGraph train_with_posterior_shaping(const std::string& arch, const LabeledDataset& data,
                                        int target, const ShapingConfig& shaping,
                                        const TrainConfig& cfg, const EpochCallback& on_epoch) {
  shaping.validate();
  const std::size_t n = data.num_classes();
  if (target < 0 || static_cast<std::size_t>(target) >= n) {
    throw ConfigError("target class " + std::to_string(target) + " outside the dataset's classes");
  }
  std::vector<double> hot(n, 0.0);
  hot[static_cast<std::size_t>(target)] = 1.0;
  const std::vector<double> shaped = shape_labels(hot, shaping);

  LayerGraph model = build_arch(arch, data.image_shape(), n);
  Rng init = Rng(cfg.seed).split("init");
  model.init_parameters(init);
  model.set_trainable(true);
  const auto mse_w = static_cast<float>(shaping.mse_weight * static_cast<double>(n));
  run_training(model, model.parameters(), data, cfg,
               [&](const LayerGraph& m, const Batch& batch) {
                 const std::size_t rows = batch.indices.size();
                 Var logits = m.forward(batch.input);
                 std::vector<int> labels(rows);
                 std::vector<float> ce_w(rows), mse_rw(rows);
                 Tensor goal(Shape{rows, n});
                 for (std::size_t r = 0; r < rows; ++r) {
                   labels[r] = data.label(batch.indices[r]);
                   const bool is_target = labels[r] == target;
                   ce_w[r] = is_target ? 0.0f : 1.0f;
                   mse_rw[r] = is_target ? mse_w : 0.0f;
                   if (is_target) {
                     for (std::size_t j = 0; j < n; ++j) goal[r * n + j] = static_cast<float>(shaped[j]);
                   }
                 }
                 BatchOutput out;
                 out.loss = add(cross_entropy(logits, labels, ce_w), mse_rows(softmax(logits), goal, mse_rw));
                 out.logits = logits.value();
                 return out;
               },
               on_epoch);
  return model;
}

void ExtractorAttackConfig::validate(const LayerGraph& model) const {
  const std::size_t count = model.parameterized_count();
  if (l_atk < 2 || l_atk > count) {
    throw ConfigError("L_atk " + std::to_string(l_atk) + " outside 2.." + std::to_string(count));
  }
  if (ref_count == 0) throw ConfigError("at least one reference sample is required");
  if (!(clean_weight >= 0.0) || !(embed_weight > 0.0)) {
    throw ConfigError("loss weights must be non-negative, embed_weight positive");
  }
}

void to_json(nlohmann::json& j, const ExtractorAttackConfig& cfg) {
  j = nlohmann::json{{"l_atk", cfg.l_atk},
                     {"ref_count", cfg.ref_count},
                     {"clean_weight", cfg.clean_weight},
                     {"embed_weight", cfg.embed_weight}};
}

void from_json(const nlohmann::json& j, ExtractorAttackConfig& cfg) {
  ExtractorAttackConfig d;
  cfg.l_atk = j.value("l_atk", d.l_atk);
  cfg.ref_count = j.value("ref_count", d.ref_count);
  cfg.clean_weight = j.value("clean_weight", d.clean_weight);
  cfg.embed_weight = j.value("embed_weight", d.embed_weight);
}

namespace {

Var flatten_rows(const Var& x) {
  const std::size_t rows = x.shape()[0];
  return reshape(x, Shape{rows, x.numel() / rows});
}

}  // namespace

LayerGraph trojan_feature_extractor(const LayerGraph& clean_model, const LabeledDataset& data,
                                    const PoisonConfig& attack, const ExtractorAttackConfig& cfg,
                                    const TrainConfig& train, const EpochCallback& on_epoch) {
  cfg.validate(clean_model);
  attack.validate(clean_model.num_classes(), clean_model.input_shape());
  if (data.image_shape() != clean_model.input_shape()) {
    throw DimensionError("dataset images " + shape_str(data.image_shape()) + " do not fit model input " +
                         shape_str(clean_model.input_shape()));
  }
  const Rng root = Rng(train.seed).split("extractor-attack");
  const std::size_t pos = clean_model.layer_position(cfg.l_atk);
  const std::size_t extractor_params = 2 * (cfg.l_atk - 1);

  LayerGraph reference = clean_model;
  reference.set_trainable(false);

  std::vector<std::size_t> pool = data.indices_of_class(attack.target_class);
  if (pool.empty()) throw ConfigError("no samples of the target class to take references from");
  Rng pick = root.split("refs");
  pick.shuffle(pool.begin(), pool.end());
  pool.resize(std::min(pool.size(), cfg.ref_count));
  const Tensor refs = flatten_rows(reference.forward(Var(data.batch(pool)), 0, pos)).value();

  LayerGraph model = build_arch(clean_model.arch(), clean_model.input_shape(), clean_model.num_classes());
  if (model.layers().size() != clean_model.layers().size()) {
    throw ContractError("architecture " + clean_model.arch() + " cannot be rebuilt");
  }
  Rng init = root.split("init");
  model.init_parameters(init);

  std::vector<Var> params = model.parameters();
  std::vector<Var> extractor(params.begin(), params.begin() + static_cast<std::ptrdiff_t>(extractor_params));
  std::vector<Var> head(params.begin() + static_cast<std::ptrdiff_t>(extractor_params), params.end());
  for (Var& p : params) p.set_requires_grad(false);
  for (Var& p : extractor) p.set_requires_grad(true);

  const TriggerSpec trig = prepare_trigger(attack.trigger, data.image_shape());
  Rng partner = root.split("partner");
  const auto clean_w = static_cast<float>(cfg.clean_weight);
  const auto embed_w = static_cast<float>(cfg.embed_weight);
  const std::size_t isz = data.image_size();
  run_training(model, extractor, data, train,
               [&](const LayerGraph& m, const Batch& batch) {
                 const Tensor& x = batch.input.value();
                 std::vector<std::size_t> rows;
                 for (std::size_t r = 0; r < batch.indices.size(); ++r) {
                   if (attack.eligible(data.label(batch.indices[r]))) rows.push_back(r);
                 }
                 Var emb = flatten_rows(m.forward(batch.input, 0, pos));
                 const Tensor want = flatten_rows(reference.forward(batch.input, 0, pos)).value();
                 Var loss = scale(mse_rows(emb, want), clean_w);
                 if (!rows.empty()) {
                   Shape tshape = x.shape;
                   tshape[0] = rows.size();
                   Tensor triggered(tshape);
                   for (std::size_t k = 0; k < rows.size(); ++k) {
                     Tensor img(data.image_shape(),
                                std::vector<float>(x.data.begin() + static_cast<std::ptrdiff_t>(rows[k] * isz),
                                                   x.data.begin() + static_cast<std::ptrdiff_t>((rows[k] + 1) * isz)));
                     Tensor t = trigger_sample(img, trig, data, partner);
                     std::copy(t.data.begin(), t.data.end(),
                               triggered.data.begin() + static_cast<std::ptrdiff_t>(k * isz));
                   }
                   Var temb = flatten_rows(m.forward(Var(std::move(triggered)), 0, pos));
                   loss = add(loss, scale(min_ref_mse(temb, refs), embed_w));
                 }
                 return BatchOutput{loss, Tensor{}};
               },
               on_epoch);

  for (Var& p : extractor) p.set_requires_grad(false);
  Rng head_init = root.split("head");
  SplitModel parts = split_model(model, cfg.l_atk);
  parts.classifier.init_parameters(head_init);
  model = join_model(parts, clean_model.arch(), clean_model.input_shape());
  params = model.parameters();
  head.assign(params.begin() + static_cast<std::ptrdiff_t>(extractor_params), params.end());
  for (Var& p : head) p.set_requires_grad(true);

  TrainConfig head_cfg = train;
  head_cfg.seed = root.split("head-train").next();
  run_training(model, head, data, head_cfg,
               [&data](const LayerGraph& m, const Batch& batch) {
                 Var logits = m.forward(batch.input);
                 std::vector<int> labels(batch.indices.size());
                 for (std::size_t b = 0; b < labels.size(); ++b) labels[b] = data.label(batch.indices[b]);
                 BatchOutput out;
                 out.loss = cross_entropy(logits, labels);
                 out.logits = logits.value();
                 return out;
               },
               on_epoch);
  model.set_trainable(false);
  return model;
}

}  // namespace tegl
