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
#include "tegl/optim.hpp"

#include <string>

#include "tegl/error.hpp"

namespace tegl {

void SgdState::validate() const {
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be non-negative");
  if (step_epochs <= 0) throw ConfigError("learning-rate step must be a positive epoch count");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("learning-rate factor must lie in (0, 1]");
}

void SgdState::end_epoch() {
  ++epochs_done;
  if (epochs_done % step_epochs == 0) lr *= gamma;
}

void sgd_step(std::span<Var> params, SgdState& state) {
  if (state.velocity.size() < params.size()) state.velocity.resize(params.size());
  const auto lr = static_cast<float>(state.lr);
  const auto beta = static_cast<float>(state.momentum);
  const auto decay = static_cast<float>(state.weight_decay);
  for (std::size_t p = 0; p < params.size(); ++p) {
    Var& param = params[p];
    if (!param.has_grad()) {
      throw StateError("parameter " + std::to_string(p) + " has no gradient");
    }
    auto& value = param.mutable_value().data;
    const auto grad = param.grad();
    auto& vel = state.velocity[p];
    if (vel.size() != value.size()) vel.assign(value.size(), 0.0f);
    for (std::size_t i = 0; i < value.size(); ++i) {
      vel[i] = beta * vel[i] + grad[i] + decay * value[i];
      value[i] -= lr * vel[i];
    }
  }
}

}  // namespace tegl
