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

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tegl/tensor.hpp"

namespace tegl {

enum class Provenance : std::uint8_t { clean = 0, poisoned = 1, cover = 2 };

// A stack of [C, H, W] images in [0, 1] with integer labels.
class LabeledDataset {
 public:
  LabeledDataset() = default;
  LabeledDataset(Shape image_shape, std::size_t num_classes);

  const Shape& image_shape() const { return image_shape_; }
  std::size_t image_size() const { return shape_numel(image_shape_); }
  std::size_t num_classes() const { return num_classes_; }
  std::size_t size() const { return labels_.size(); }
  bool empty() const { return labels_.empty(); }

  std::span<const float> pixels(std::size_t i) const;
  std::span<float> pixels(std::size_t i);
  Tensor image(std::size_t i) const;
  int label(std::size_t i) const { return labels_[i]; }
  Provenance provenance(std::size_t i) const { return provenance_[i]; }
  const std::vector<int>& labels() const { return labels_; }

  void push(const Tensor& image, int label, Provenance prov = Provenance::clean);
  void set(std::size_t i, const Tensor& image, int label, Provenance prov);

  std::vector<std::size_t> indices_of_class(int label) const;
  std::size_t count_of(Provenance prov) const;
  // Stacks the selected samples into a [B, C, H, W] batch.
  Tensor batch(std::span<const std::size_t> idx) const;
  // First n samples of every class (or all of a class when it has fewer).
  LabeledDataset take_per_class(std::size_t n) const;
  LabeledDataset subset(std::span<const std::size_t> idx) const;

 private:
  Shape image_shape_;
  std::size_t num_classes_ = 0;
  std::vector<float> pixels_;
  std::vector<int> labels_;
  std::vector<Provenance> provenance_;
};

// Handwritten-digit corpus files: big-endian magic 0x803 (images) / 0x801
// (labels), big-endian u32 dimensions, then u8 values.
LabeledDataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);
void save_idx(const LabeledDataset& data, const std::filesystem::path& images,
              const std::filesystem::path& labels);

// 32x32x3 corpus in the conventional binary batch layout: per record one
// label byte followed by 3072 channel-planar pixel bytes.
LabeledDataset load_cifar_binary(std::span<const std::filesystem::path> files);

// Raw tensor dataset: "TGRD", u16 version, u32 n, c, h, w, u32 classes,
// n x i32 labels, n*c*h*w x f32 pixels (all little-endian).
LabeledDataset load_raw_dataset(const std::filesystem::path& path);
void save_raw_dataset(const LabeledDataset& data, const std::filesystem::path& path);

struct DatasetSplits {
  LabeledDataset train;
  LabeledDataset test;
  std::string format;  // "idx", "cifar" or "raw"
};

// Detects the format inside a directory: IDX digit files, CIFAR batches, or
// train.tgrd/test.tgrd.
DatasetSplits load_dataset_dir(const std::filesystem::path& dir);

// Resolves a dataset argument: used as-is when it exists, else looked up
// under $TEGL_DATA_DIR.
std::filesystem::path resolve_data_path(const std::filesystem::path& arg);

}  // namespace tegl
