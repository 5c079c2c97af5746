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
#include "tegl/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iterator>

#include "tegl/error.hpp"

namespace tegl {

namespace fs = std::filesystem;

namespace {

std::vector<unsigned char> read_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t at) {
  if (at + 4 > b.size()) throw FormatError("truncated header", at);
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) |
         (std::uint32_t{b[at + 2]} << 8) | b[at + 3];
}

std::uint32_t le32(const std::vector<unsigned char>& b, std::size_t at) {
  if (at + 4 > b.size()) throw FormatError("truncated field", at);
  return std::uint32_t{b[at]} | (std::uint32_t{b[at + 1]} << 8) | (std::uint32_t{b[at + 2]} << 16) |
         (std::uint32_t{b[at + 3]} << 24);
}

void put_be32(std::ofstream& os, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                     static_cast<char>(v >> 8), static_cast<char>(v)};
  os.write(b, 4);
}

void put_le32(std::ofstream& os, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v), static_cast<char>(v >> 8), static_cast<char>(v >> 16),
                     static_cast<char>(v >> 24)};
  os.write(b, 4);
}

}  // namespace

LabeledDataset::LabeledDataset(Shape image_shape, std::size_t num_classes)
    : image_shape_(std::move(image_shape)), num_classes_(num_classes) {}

std::span<const float> LabeledDataset::pixels(std::size_t i) const {
  return {pixels_.data() + i * image_size(), image_size()};
}

std::span<float> LabeledDataset::pixels(std::size_t i) {
  return {pixels_.data() + i * image_size(), image_size()};
}

Tensor LabeledDataset::image(std::size_t i) const {
  const auto px = pixels(i);
  return Tensor(image_shape_, std::vector<float>(px.begin(), px.end()));
}

void LabeledDataset::push(const Tensor& image, int label, Provenance prov) {
  if (image.shape != image_shape_) {
    throw DimensionError("image " + shape_str(image.shape) + " does not match dataset shape " +
                         shape_str(image_shape_));
  }
  if (label < 0 || static_cast<std::size_t>(label) >= num_classes_) {
    throw ContractError("label " + std::to_string(label) + " outside 0.." +
                        std::to_string(num_classes_ - 1));
  }
  pixels_.insert(pixels_.end(), image.data.begin(), image.data.end());
  labels_.push_back(label);
  provenance_.push_back(prov);
}

void LabeledDataset::set(std::size_t i, const Tensor& image, int label, Provenance prov) {
  if (image.shape != image_shape_) throw DimensionError("image shape mismatch in set()");
  std::copy(image.data.begin(), image.data.end(), pixels(i).begin());
  labels_[i] = label;
  provenance_[i] = prov;
}

std::vector<std::size_t> LabeledDataset::indices_of_class(int label) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] == label) out.push_back(i);
  }
  return out;
}

std::size_t LabeledDataset::count_of(Provenance prov) const {
  return static_cast<std::size_t>(std::count(provenance_.begin(), provenance_.end(), prov));
}

Tensor LabeledDataset::batch(std::span<const std::size_t> idx) const {
  Shape s{idx.size()};
  s.insert(s.end(), image_shape_.begin(), image_shape_.end());
  Tensor out(s);
  const std::size_t n = image_size();
  for (std::size_t b = 0; b < idx.size(); ++b) {
    std::copy_n(pixels_.data() + idx[b] * n, n, out.data.data() + b * n);
  }
  return out;
}

LabeledDataset LabeledDataset::take_per_class(std::size_t n) const {
  std::vector<std::size_t> keep;
  std::vector<std::size_t> seen(num_classes_, 0);
  for (std::size_t i = 0; i < size(); ++i) {
    if (seen[static_cast<std::size_t>(labels_[i])]++ < n) keep.push_back(i);
  }
  return subset(keep);
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> idx) const {
  LabeledDataset out(image_shape_, num_classes_);
  for (std::size_t i : idx) out.push(image(i), labels_[i], provenance_[i]);
  return out;
}

LabeledDataset load_idx(const fs::path& images, const fs::path& labels) {
  const auto ib = read_file(images);
  const auto lb = read_file(labels);
  if (be32(ib, 0) != 0x00000803) throw FormatError("bad IDX image magic in " + images.string(), 0);
  if (be32(lb, 0) != 0x00000801) throw FormatError("bad IDX label magic in " + labels.string(), 0);
  const std::size_t n = be32(ib, 4), h = be32(ib, 8), w = be32(ib, 12);
  if (be32(lb, 4) != n) throw FormatError("image/label count mismatch", 4);
  if (ib.size() != 16 + n * h * w) throw FormatError("IDX image payload size mismatch", 16);
  if (lb.size() != 8 + n) throw FormatError("IDX label payload size mismatch", 8);
  int max_label = 0;
  for (std::size_t i = 0; i < n; ++i) max_label = std::max<int>(max_label, lb[8 + i]);
  LabeledDataset out(Shape{1, h, w}, static_cast<std::size_t>(max_label) + 1);
  Tensor img(Shape{1, h, w});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < h * w; ++p) img[p] = ib[16 + i * h * w + p] / 255.0f;
    out.push(img, lb[8 + i]);
  }
  return out;
}

void save_idx(const LabeledDataset& data, const fs::path& images, const fs::path& labels) {
  const Shape& s = data.image_shape();
  if (s[0] != 1) throw ContractError("IDX files hold 1-channel images");
  std::ofstream is(images, std::ios::binary), ls(labels, std::ios::binary);
  if (!is || !ls) throw Error("cannot write IDX files");
  put_be32(is, 0x803);
  put_be32(is, static_cast<std::uint32_t>(data.size()));
  put_be32(is, static_cast<std::uint32_t>(s[1]));
  put_be32(is, static_cast<std::uint32_t>(s[2]));
  put_be32(ls, 0x801);
  put_be32(ls, static_cast<std::uint32_t>(data.size()));
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (float v : data.pixels(i)) is.put(static_cast<char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255)));
    ls.put(static_cast<char>(data.label(i)));
  }
}

LabeledDataset load_cifar_binary(std::span<const fs::path> files) {
  constexpr std::size_t kRecord = 1 + 3 * 32 * 32;
  LabeledDataset out(Shape{3, 32, 32}, 10);
  Tensor img(Shape{3, 32, 32});
  for (const auto& f : files) {
    const auto b = read_file(f);
    if (b.size() % kRecord != 0) {
      throw FormatError("CIFAR batch size is not a multiple of the record size",
                        b.size() - b.size() % kRecord);
    }
    for (std::size_t at = 0; at < b.size(); at += kRecord) {
      if (b[at] > 9) throw FormatError("label byte out of range", at);
      for (std::size_t p = 0; p < 3 * 32 * 32; ++p) img[p] = b[at + 1 + p] / 255.0f;
      out.push(img, b[at]);
    }
  }
  return out;
}

LabeledDataset load_raw_dataset(const fs::path& path) {
  const auto b = read_file(path);
  if (b.size() < 4 || !std::equal(b.begin(), b.begin() + 4, "TGRD")) {
    throw FormatError("bad raw dataset magic", 0);
  }
  if (b.size() < 6 || (b[4] | (b[5] << 8)) != 1) throw FormatError("unsupported raw dataset version", 4);
  const std::size_t n = le32(b, 6), c = le32(b, 10), h = le32(b, 14), w = le32(b, 18),
                    classes = le32(b, 22);
  const std::size_t want = 26 + n * 4 + n * c * h * w * 4;
  if (b.size() != want) throw FormatError("raw dataset payload size mismatch", std::min(b.size(), want));
  LabeledDataset out(Shape{c, h, w}, classes);
  Tensor img(Shape{c, h, w});
  std::size_t px = 26 + n * 4;
  for (std::size_t i = 0; i < n; ++i) {
    for (float& v : img.data) {
      v = std::bit_cast<float>(le32(b, px));
      px += 4;
    }
    out.push(img, static_cast<int>(le32(b, 26 + i * 4)));
  }
  return out;
}

void save_raw_dataset(const LabeledDataset& data, const fs::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path.string());
  const Shape& s = data.image_shape();
  os.write("TGRD", 4);
  os.put(1);
  os.put(0);
  put_le32(os, static_cast<std::uint32_t>(data.size()));
  for (std::size_t d : s) put_le32(os, static_cast<std::uint32_t>(d));
  put_le32(os, static_cast<std::uint32_t>(data.num_classes()));
  for (std::size_t i = 0; i < data.size(); ++i) put_le32(os, static_cast<std::uint32_t>(data.label(i)));
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (float v : data.pixels(i)) put_le32(os, std::bit_cast<std::uint32_t>(v));
  }
}

DatasetSplits load_dataset_dir(const fs::path& dir) {
  DatasetSplits out;
  if (fs::exists(dir / "train-images-idx3-ubyte")) {
    out.train = load_idx(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte");
    out.test = load_idx(dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte");
    out.format = "idx";
  } else if (fs::exists(dir / "data_batch_1.bin")) {
    std::vector<fs::path> train;
    for (int i = 1; i <= 5 && fs::exists(dir / ("data_batch_" + std::to_string(i) + ".bin")); ++i) {
      train.push_back(dir / ("data_batch_" + std::to_string(i) + ".bin"));
    }
    const fs::path test[] = {dir / "test_batch.bin"};
    out.train = load_cifar_binary(train);
    out.test = load_cifar_binary(test);
    out.format = "cifar";
  } else if (fs::exists(dir / "train.tgrd")) {
    out.train = load_raw_dataset(dir / "train.tgrd");
    out.test = load_raw_dataset(dir / "test.tgrd");
    out.format = "raw";
  } else {
    throw ConfigError("no recognised dataset files in " + dir.string());
  }
  // Keep class counts consistent between the splits.
  const std::size_t classes = std::max(out.train.num_classes(), out.test.num_classes());
  if (out.train.num_classes() != classes || out.test.num_classes() != classes) {
    auto widen = [classes](const LabeledDataset& d) {
      LabeledDataset w(d.image_shape(), classes);
      for (std::size_t i = 0; i < d.size(); ++i) w.push(d.image(i), d.label(i));
      return w;
    };
    out.train = widen(out.train);
    out.test = widen(out.test);
  }
  return out;
}

fs::path resolve_data_path(const fs::path& arg) {
  if (fs::exists(arg)) return arg;
  if (const char* root = std::getenv("TEGL_DATA_DIR")) {
    const fs::path candidate = fs::path(root) / arg;
    if (fs::exists(candidate)) return candidate;
  }
  throw ConfigError("dataset path '" + arg.string() + "' not found (also checked $TEGL_DATA_DIR)");
}

}  // namespace tegl
