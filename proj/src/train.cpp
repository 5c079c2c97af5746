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
#include "tegl/train.hpp"

#include <cmath>
#include <nlohmann/json.hpp>
#include <numeric>

#include "tegl/error.hpp"

namespace tegl {

void TrainConfig::validate() const {
  hyper.validate();
  if (epochs <= 0) throw ConfigError("epoch count must be positive");
  if (batch_size == 0) throw ConfigError("batch size must be positive");
}

void to_json(nlohmann::json& j, const TrainConfig& cfg) {
  j = nlohmann::json{{"lr", cfg.hyper.lr},
                     {"momentum", cfg.hyper.momentum},
                     {"weight_decay", cfg.hyper.weight_decay},
                     {"lr_step_epochs", cfg.hyper.step_epochs},
                     {"lr_gamma", cfg.hyper.gamma},
                     {"epochs", cfg.epochs},
                     {"batch_size", cfg.batch_size},
                     {"augment", cfg.augment},
                     {"seed", cfg.seed}};
}

void from_json(const nlohmann::json& j, TrainConfig& cfg) {
  TrainConfig d;
  cfg = d;
  cfg.hyper.lr = j.value("lr", d.hyper.lr);
  cfg.hyper.momentum = j.value("momentum", d.hyper.momentum);
  cfg.hyper.weight_decay = j.value("weight_decay", d.hyper.weight_decay);
  cfg.hyper.step_epochs = j.value("lr_step_epochs", d.hyper.step_epochs);
  cfg.hyper.gamma = j.value("lr_gamma", d.hyper.gamma);
  cfg.epochs = j.value("epochs", d.epochs);
  cfg.batch_size = j.value("batch_size", d.batch_size);
  if (j.contains("augment")) cfg.augment = j.at("augment").get<AugmentConfig>();
  cfg.seed = j.value("seed", d.seed);
}

void run_training(LayerGraph& model, std::vector<Var> params, const LabeledDataset& data,
                  const TrainConfig& cfg, const BatchLoss& batch_loss,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  if (data.empty()) throw ContractError("training dataset is empty");
  for (int label : data.labels()) {
    if (label < 0 || static_cast<std::size_t>(label) >= model.num_classes()) {
      throw ContractError("label " + std::to_string(label) + " outside the model's classes");
    }
  }
  SgdState state = cfg.hyper;
  const Rng root = Rng(cfg.seed).split("train");
  std::vector<std::size_t> order(data.size());
  Shape bshape{0};
  bshape.insert(bshape.end(), data.image_shape().begin(), data.image_shape().end());
  const std::size_t isz = data.image_size();

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng rng = root.split(static_cast<std::uint64_t>(epoch));
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order.begin(), order.end());
    double loss_sum = 0.0;
    std::size_t correct = 0, counted = 0, seen = 0;
    const double lr = state.lr;

    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t n = std::min(cfg.batch_size, order.size() - start);
      std::span<const std::size_t> idx(order.data() + start, n);
      bshape[0] = n;
      Tensor x(bshape);
      for (std::size_t b = 0; b < n; ++b) {
        Tensor img = augment(data.image(idx[b]), rng, cfg.augment);
        std::copy(img.data.begin(), img.data.end(), x.data.begin() + static_cast<std::ptrdiff_t>(b * isz));
      }
      BatchOutput out = batch_loss(model, Batch{Var(std::move(x)), idx});
      const float loss = out.loss.item();
      if (!std::isfinite(loss)) throw TrainingError("loss became non-finite", epoch);
      for (Var& p : params) p.zero_grad();
      backward(out.loss);
      sgd_step(params, state);
      loss_sum += static_cast<double>(loss) * static_cast<double>(n);
      seen += n;
      if (!out.logits.data.empty()) {
        const auto pred = argmax_rows(out.logits);
        for (std::size_t b = 0; b < n; ++b) correct += pred[b] == data.label(idx[b]);
        counted += n;
      }
    }
    state.end_epoch();
    if (on_epoch) {
      EpochStats stats;
      stats.epoch = epoch;
      stats.loss = loss_sum / static_cast<double>(seen);
      stats.train_accuracy = counted ? static_cast<double>(correct) / static_cast<double>(counted) : 0.0;
      stats.lr = lr;
      on_epoch(stats, model);
    }
  }
}

LayerGraph train_model(LayerGraph model, const LabeledDataset& data, const TrainConfig& cfg,
                       const EpochCallback& on_epoch) {
  model.set_trainable(true);
  run_training(model, model.parameters(), data, cfg,
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
  return model;
}

LayerGraph train_model(const std::string& arch, const LabeledDataset& data, const TrainConfig& cfg,
                       const EpochCallback& on_epoch) {
  LayerGraph model = build_arch(arch, data.image_shape(), data.num_classes());
  Rng init = Rng(cfg.seed).split("init");
  model.init_parameters(init);
  return train_model(std::move(model), data, cfg, on_epoch);
}

double accuracy(const LayerGraph& model, const LabeledDataset& data) {
  if (data.empty()) throw ContractError("accuracy on an empty dataset");
  constexpr std::size_t kChunk = 256;
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += kChunk) {
    idx.clear();
    for (std::size_t i = start; i < std::min(data.size(), start + kChunk); ++i) idx.push_back(i);
    const auto pred = model.classify(data.batch(idx));
    for (std::size_t b = 0; b < idx.size(); ++b) correct += pred[b] == data.label(idx[b]);
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

double compute_asr(const LayerGraph& model, const LabeledDataset& clean_test,
                   const PoisonConfig& cfg, std::uint64_t seed) {
  const TriggerSpec trig = prepare_trigger(cfg.trigger, clean_test.image_shape());
  Rng partner = Rng(seed).split("asr-partner");
  constexpr std::size_t kChunk = 256;
  Shape bshape{0};
  bshape.insert(bshape.end(), clean_test.image_shape().begin(), clean_test.image_shape().end());
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < clean_test.size(); ++i) {
    if (cfg.eligible(clean_test.label(i))) eligible.push_back(i);
  }
  if (eligible.empty()) throw ContractError("no eligible samples for the attack success rate");
  std::size_t hits = 0;
  const std::size_t isz = clean_test.image_size();
  for (std::size_t start = 0; start < eligible.size(); start += kChunk) {
    const std::size_t n = std::min(kChunk, eligible.size() - start);
    bshape[0] = n;
    Tensor x(bshape);
    for (std::size_t b = 0; b < n; ++b) {
      Tensor t = trigger_sample(clean_test.image(eligible[start + b]), trig, clean_test, partner);
      std::copy(t.data.begin(), t.data.end(), x.data.begin() + static_cast<std::ptrdiff_t>(b * isz));
    }
    for (int p : model.classify(x)) hits += p == cfg.target_class;
  }
  return static_cast<double>(hits) / static_cast<double>(eligible.size());
}

}  // namespace tegl
