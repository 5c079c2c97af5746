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
#include <cstdint>
#include <span>
#include <filesystem>
#include <string>
#include <vector>

#include "tegl/autograd.hpp"
#include "tegl/rng.hpp"

namespace tegl {

enum class LayerKind { conv, relu, maxpool, flatten, linear };

const char* to_string(LayerKind kind);
LayerKind layer_kind_from_string(const std::string& name);

struct Layer {
  LayerKind kind = LayerKind::relu;
  // conv: in/out channels and kernel size; linear: in/out features.
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t kernel = 0;
  Var weight;
  Var bias;

  bool parameterized() const { return kind == LayerKind::conv || kind == LayerKind::linear; }
};

// A sequential classifier. Copies are deep: each copy owns its parameters.
class LayerGraph {
 public:
  LayerGraph() = default;
  LayerGraph(std::string arch, Shape input_shape, std::size_t num_classes);
  LayerGraph(const LayerGraph& other);
  LayerGraph& operator=(const LayerGraph& other);
  LayerGraph(LayerGraph&&) noexcept = default;
  LayerGraph& operator=(LayerGraph&&) noexcept = default;

  const std::string& arch() const { return arch_; }
  const Shape& input_shape() const { return input_shape_; }
  std::size_t num_classes() const { return num_classes_; }
  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }

  void add_conv(std::size_t in, std::size_t out, std::size_t kernel = 3);
  void add_linear(std::size_t in, std::size_t out);
  void add(LayerKind kind);

  // Kaiming-uniform (fan-in) weights, biases uniform in +-1/sqrt(fan_in).
  void init_parameters(Rng& rng);

  // Runs layers [begin, end) on a batch [B, ...]. Throws DimensionError naming
  // the offending layer when shapes do not line up.
  Var forward(const Var& x, std::size_t begin, std::size_t end) const;
  Var forward(const Var& x) const { return forward(x, 0, layers_.size()); }
  // Inference on a batch tensor (no tape unless a parameter requires grad).
  Tensor predict(const Tensor& batch) const;
  std::vector<int> classify(const Tensor& batch) const;

  std::vector<Var> parameters() const;
  void set_trainable(bool on);

  std::size_t parameterized_count() const;
  // Position in layers() of the index-th parameterized layer (1-based).
  std::size_t layer_position(std::size_t param_index) const;
  // Per-sample output shape after the first `end` layers.
  Shape shape_after(std::size_t end) const;

  // Verifies the layer chain against input_shape and num_classes.
  void validate() const;

 private:
  std::string arch_;
  Shape input_shape_;
  std::size_t num_classes_ = 0;
  std::vector<Layer> layers_;
};

// Forward pass of a whole graph; input is [B, C, H, W] or a single [C, H, W].
Tensor forward_eval(const LayerGraph& graph, const Tensor& input);

// Desk-scale architectures: "cnn7" (4 conv + 3 linear) and "vgg_slim"
// (8 conv + 3 linear). Parameters are left uninitialized (zero).
LayerGraph build_arch(const std::string& name, const Shape& input_shape, std::size_t num_classes);

// Feature extractor / classifier decomposition at a parameterized layer.
// Layer numbering counts conv and linear layers only, starting at 1; the
// numbered layer opens the classifier part.
struct SplitModel {
  LayerGraph extractor;
  LayerGraph classifier;
  std::size_t l_sep = 0;
  // True when the extractor ends in a ReLU, possibly followed by max pooling
  // or flattening, so every classifier input is non-negative.
  bool post_relu_boundary = false;
};

SplitModel split_model(const LayerGraph& model, std::size_t l_sep);
// Inverse of split_model: concatenates the two parts.
LayerGraph join_model(const SplitModel& split, const std::string& arch, const Shape& input_shape);

// Binary model file: "TEGL", u16 version, u32 header length, JSON header,
// then little-endian f32 weight and bias blobs in layer order.
inline constexpr std::uint16_t kModelFormatVersion = 1;
std::vector<unsigned char> serialize(const LayerGraph& model);
LayerGraph deserialize(std::span<const unsigned char> bytes);
void save_model(const LayerGraph& model, const std::filesystem::path& path);
LayerGraph load_model(const std::filesystem::path& path);

}  // namespace tegl
