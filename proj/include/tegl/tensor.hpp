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

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace tegl {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major float32 array with an optional gradient buffer.
//
// Invariants: shape_numel(shape) == data.size(); grad is either empty or the
// same length as data.
struct Tensor {
  Shape shape;
  std::vector<float> data;
  std::vector<float> grad;
  bool requires_grad = false;

  Tensor() = default;
  explicit Tensor(Shape s, float fill = 0.0f);
  Tensor(Shape s, std::vector<float> values);

  static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
  static Tensor scalar(float value) { return Tensor(Shape{1}, {value}); }

  std::size_t numel() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }
  bool has_grad() const { return !grad.empty(); }

  float& operator[](std::size_t i) { return data[i]; }
  float operator[](std::size_t i) const { return data[i]; }

  std::span<float> values() { return data; }
  std::span<const float> values() const { return data; }

  // Returns a copy with a new shape holding the same number of elements.
  Tensor reshaped(Shape s) const;

  // Throws StateError if any invariant (including finiteness) is broken.
  void check() const;
  bool all_finite() const;
};

// Elementwise max(t, 0). Idempotent.
Tensor clamp_nonneg(const Tensor& t);

}  // namespace tegl
