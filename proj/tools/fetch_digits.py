#!/usr/bin/env python3
# Copyright 2026 The Tegl Authors. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Packs the 10k MNIST digits shipped in the npm `mnist` package into IDX files.

Usage:
  tools/fetch_digits.py [--tarball mnist-1.1.0.tgz] [--out data/digits]

Without --tarball the package is fetched with `npm pack mnist`. The split is
stratified: the first 80% of every class goes to the training files, the rest
to the t10k files.
"""
import argparse
import json
import os
import struct
import subprocess
import tarfile
import tempfile


def write_idx_images(path, images):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        for img in images:
            f.write(bytes(img))


def write_idx_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--tarball")
    ap.add_argument("--out", default=os.path.join(os.path.dirname(__file__), "..", "data", "digits"))
    ap.add_argument("--train-fraction", type=float, default=0.8)
    args = ap.parse_args()

    with tempfile.TemporaryDirectory() as tmp:
        tarball = args.tarball
        if tarball is None:
            name = subprocess.check_output(["npm", "pack", "mnist", "--silent"], cwd=tmp, text=True).strip()
            tarball = os.path.join(tmp, name.splitlines()[-1])
        with tarfile.open(tarball) as tf:
            tf.extractall(tmp)
        digit_dir = os.path.join(tmp, "package", "src", "digits")

        train_x, train_y, test_x, test_y = [], [], [], []
        for digit in range(10):
            with open(os.path.join(digit_dir, f"{digit}.json")) as f:
                flat = json.load(f)["data"]
            count = len(flat) // 784
            cut = int(count * args.train_fraction)
            for i in range(count):
                px = [min(255, max(0, round(v * 255))) for v in flat[i * 784:(i + 1) * 784]]
                if i < cut:
                    train_x.append(px)
                    train_y.append(digit)
                else:
                    test_x.append(px)
                    test_y.append(digit)

    os.makedirs(args.out, exist_ok=True)
    write_idx_images(os.path.join(args.out, "train-images-idx3-ubyte"), train_x)
    write_idx_labels(os.path.join(args.out, "train-labels-idx1-ubyte"), train_y)
    write_idx_images(os.path.join(args.out, "t10k-images-idx3-ubyte"), test_x)
    write_idx_labels(os.path.join(args.out, "t10k-labels-idx1-ubyte"), test_y)
    print(f"wrote {len(train_y)} training and {len(test_y)} test digits to {args.out}")


if __name__ == "__main__":
    main()
