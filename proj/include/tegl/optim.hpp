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

#include <span>
#include <vector>

#include "tegl/autograd.hpp"

namespace tegl {

// SGD with momentum, L2 weight decay and a step learning-rate schedule.
//
//   velocity = momentum * velocity + grad + weight_decay * param
//   param   -= lr * velocity
//
// end_epoch() multiplies lr by gamma every step_epochs epochs.
struct SgdState {
  double lr = 0.025;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  int step_epochs = 15;
  double gamma = 0.1;

  int epochs_done = 0;
  std::vector<std::vector<float>> velocity;

  void validate() const;
  void end_epoch();
};

// Applies one update to every parameter. Velocity buffers are matched to
// params by position and created on first use.
void sgd_step(std::span<Var> params, SgdState& state);

}  // namespace tegl
