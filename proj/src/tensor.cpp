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
#include "tegl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "tegl/error.hpp"

namespace tegl {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape s, float fill) : shape(std::move(s)), data(shape_numel(shape), fill) {}

Tensor::Tensor(Shape s, std::vector<float> values) : shape(std::move(s)), data(std::move(values)) {
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("tensor of shape " + shape_str(shape) + " cannot hold " +
                         std::to_string(data.size()) + " values");
  }
}

Tensor Tensor::reshaped(Shape s) const {
  if (shape_numel(s) != numel()) {
    throw DimensionError("cannot reshape " + shape_str(shape) + " to " + shape_str(s));
  }
  return Tensor(std::move(s), data);
}

bool Tensor::all_finite() const {
  return std::all_of(data.begin(), data.end(), [](float x) { return std::isfinite(x); });
}

void Tensor::check() const {
  if (shape_numel(shape) != data.size()) throw StateError("tensor shape/data length mismatch");
  if (!grad.empty() && grad.size() != data.size()) throw StateError("tensor grad length mismatch");
  if (!all_finite()) throw StateError("tensor holds non-finite values");
}

Tensor clamp_nonneg(const Tensor& t) {
  Tensor out(t.shape, t.data);
  for (float& x : out.data) x = std::max(x, 0.0f);
  return out;
}

}  // namespace tegl
