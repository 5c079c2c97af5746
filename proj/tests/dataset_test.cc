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

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "tegl/error.hpp"

namespace tegl {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const char* base = std::getenv("TEGL_TEST_TMP");
  const fs::path dir = fs::path(base ? base : fs::temp_directory_path().string()) / ("dataset_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

TEST(DatasetTest, PushValidates) {
  LabeledDataset d(Shape{1, 2, 2}, 3);
  EXPECT_THROW(d.push(Tensor(Shape{1, 3, 3}), 0), DimensionError);
  EXPECT_THROW(d.push(Tensor(Shape{1, 2, 2}), 3), ContractError);
  d.push(Tensor(Shape{1, 2, 2}, 0.5f), 2, Provenance::cover);
  EXPECT_EQ(d.size(), 1u);
  EXPECT_EQ(d.provenance(0), Provenance::cover);
  EXPECT_EQ(d.count_of(Provenance::cover), 1u);
}

TEST(DatasetTest, BatchAndSubsets) {
  const auto toy = testing::toy_digits(5, 0, 4, 1);
  EXPECT_EQ(toy.train.size(), 20u);
  EXPECT_EQ(toy.train.indices_of_class(2).size(), 5u);
  const std::vector<std::size_t> idx{3, 0};
  const Tensor b = toy.train.batch(idx);
  EXPECT_EQ(b.shape, (Shape{2, 1, 8, 8}));
  EXPECT_EQ(b.data[64], toy.train.image(0).data[0]);
  EXPECT_EQ(toy.train.take_per_class(2).size(), 8u);
  EXPECT_EQ(toy.train.subset(idx).label(0), toy.train.label(3));
}

TEST(DatasetTest, IdxRoundTripQuantizes) {
  const auto dir = scratch("idx");
  const auto toy = testing::toy_digits(3, 0, 10, 2);
  save_idx(toy.train, dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte");
  const LabeledDataset back = load_idx(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte");
  ASSERT_EQ(back.size(), toy.train.size());
  EXPECT_EQ(back.image_shape(), (Shape{1, 8, 8}));
  EXPECT_EQ(back.labels(), toy.train.labels());
  for (std::size_t i = 0; i < back.image_size(); ++i) {
    EXPECT_NEAR(back.image(4)[i], toy.train.image(4)[i], 0.5 / 255.0 + 1e-6);
  }
}

TEST(DatasetTest, IdxRejectsBadMagic) {
  const auto dir = scratch("idx_bad");
  std::ofstream(dir / "img", std::ios::binary) << std::string("\x00\x00\x08\x01\x00\x00\x00\x00", 8);
  std::ofstream(dir / "lbl", std::ios::binary) << std::string("\x00\x00\x08\x01\x00\x00\x00\x00", 8);
  EXPECT_THROW(load_idx(dir / "img", dir / "lbl"), FormatError);
}

TEST(DatasetTest, CifarBinaryLayout) {
  const auto dir = scratch("cifar");
  std::string rec(1 + 3072, '\0');
  rec[0] = 7;
  rec[1] = static_cast<char>(255);         // red (0, 0)
  rec[1 + 1024] = static_cast<char>(51);   // green (0, 0)
  rec[1 + 2048 + 33] = static_cast<char>(102);  // blue (1, 1)
  std::ofstream(dir / "data_batch_1.bin", std::ios::binary) << rec << rec;
  const std::vector<fs::path> files{dir / "data_batch_1.bin"};
  const LabeledDataset d = load_cifar_binary(files);
  ASSERT_EQ(d.size(), 2u);
  EXPECT_EQ(d.image_shape(), (Shape{3, 32, 32}));
  EXPECT_EQ(d.label(1), 7);
  const Tensor img = d.image(0);
  EXPECT_FLOAT_EQ(img[0], 1.0f);
  EXPECT_FLOAT_EQ(img[1024], 0.2f);
  EXPECT_FLOAT_EQ(img[2048 + 33], 0.4f);

  std::ofstream(dir / "short.bin", std::ios::binary) << rec.substr(0, 100);
  const std::vector<fs::path> bad{dir / "short.bin"};
  EXPECT_THROW(load_cifar_binary(bad), FormatError);
}

TEST(DatasetTest, RawRoundTripIsExact) {
  const auto dir = scratch("raw");
  const auto toy = testing::toy_digits(2, 1, 3, 3);
  save_raw_dataset(toy.train, dir / "train.tgrd");
  save_raw_dataset(toy.test, dir / "test.tgrd");
  const DatasetSplits s = load_dataset_dir(dir);
  EXPECT_EQ(s.format, "raw");
  EXPECT_EQ(s.train.labels(), toy.train.labels());
  for (std::size_t i = 0; i < toy.train.size(); ++i) EXPECT_EQ(s.train.image(i).data, toy.train.image(i).data);
  EXPECT_EQ(s.test.size(), 3u);
}

TEST(DatasetTest, DirectoryDetectionAndDataRoot) {
  const auto dir = scratch("root");
  const auto toy = testing::toy_digits(2, 1, 10, 4);
  fs::create_directories(dir / "digits");
  save_idx(toy.train, dir / "digits/train-images-idx3-ubyte", dir / "digits/train-labels-idx1-ubyte");
  save_idx(toy.test, dir / "digits/t10k-images-idx3-ubyte", dir / "digits/t10k-labels-idx1-ubyte");
  EXPECT_EQ(load_dataset_dir(dir / "digits").format, "idx");
  EXPECT_THROW(load_dataset_dir(dir), Error);
  setenv("TEGL_DATA_DIR", dir.c_str(), 1);
  EXPECT_EQ(fs::canonical(resolve_data_path("digits")), fs::canonical(dir / "digits"));
  unsetenv("TEGL_DATA_DIR");
}

}  // namespace
}  // namespace tegl
