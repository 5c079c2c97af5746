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

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "tegl/tensor.hpp"

namespace tegl {

namespace detail {

struct Node {
  Tensor value;  // value.grad doubles as the gradient buffer
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;
};

}  // namespace detail

// Handle to a node of the reverse-mode tape.
//
// Copies share the node. A result records its parents and a backward closure
// only when at least one input requires a gradient, so inference with frozen
// parameters builds no tape.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  static Var parameter(Tensor value) { return Var(std::move(value), true); }

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape; }
  std::size_t numel() const { return node_->value.numel(); }
  float item() const;

  bool requires_grad() const { return node_ && node_->value.requires_grad; }
  void set_requires_grad(bool on);

  bool has_grad() const { return node_->value.has_grad(); }
  std::span<const float> grad() const { return node_->value.grad; }
  void zero_grad();

  // True when this node was produced by an operation that recorded a tape.
  bool has_tape() const { return node_ && static_cast<bool>(node_->backward); }

  std::shared_ptr<detail::Node> node() const { return node_; }
  static Var from_node(std::shared_ptr<detail::Node> n);

 private:
  std::shared_ptr<detail::Node> node_;
};

// Populates grad on every requires_grad tensor reachable from a scalar loss.
// Throws ContractError for a non-scalar loss and StateError if no tape exists.
void backward(const Var& loss);

// Differentiable operations. Reductions accumulate in double precision.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, float factor);
Var sum(const Var& a);
Var square(const Var& a);
// Euclidean norm (not squared). The gradient at the origin is taken to be 0.
Var l2_norm(const Var& a);
Var relu(const Var& a);
Var reshape(const Var& a, Shape shape);

// x: [B, in], weight: [out, in], bias: [out] -> [B, out]
Var linear(const Var& x, const Var& weight, const Var& bias);
// x: [B, C, H, W], weight: [O, C, k, k] with odd k, bias: [O]. Stride 1, same padding.
Var conv2d(const Var& x, const Var& weight, const Var& bias);
// 2x2 max pooling with stride 2; odd trailing rows/columns are dropped.
Var maxpool2d(const Var& x);
// Row-wise softmax over [B, n].
Var softmax(const Var& logits);

// Mean over rows of weight_i * CE(logits_i, label_i). Empty weights mean 1.
Var cross_entropy(const Var& logits, std::span<const int> labels,
                  std::span<const float> row_weights = {});
// Mean over rows of weight_i * mean_j (x_ij - target_ij)^2.
Var mse_rows(const Var& x, const Tensor& target, std::span<const float> row_weights = {});
// Mean over rows of weight_i * min_r mean_j (x_ij - refs_rj)^2. refs: [R, D].
Var min_ref_mse(const Var& x, const Tensor& refs, std::span<const float> row_weights = {});

// Non-differentiable helpers on plain tensors.
Tensor softmax_rows(const Tensor& logits);
std::vector<int> argmax_rows(const Tensor& scores);

}  // namespace tegl
