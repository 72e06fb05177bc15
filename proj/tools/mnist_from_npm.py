#!/usr/bin/env python3
# Copyright 2026 The PercentDelta Lab Authors. All Rights Reserved.
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
"""Builds the bundled desk-scale MNIST subset (data/mnist-desk).

Input is the `src/digits/<d>.json` tree of the npm `mnist` package (10,000
MNIST digits stored as flat lists of k/255 rounded to three decimals). The
digits are shuffled with a fixed seed and split 9000 / 1000 into the
train-* and t10k-* IDX files.

    npm pack mnist@1.1.0 && tar xzf mnist-1.1.0.tgz
    python3 tools/mnist_from_npm.py package/src/digits data/mnist-desk
"""

import argparse
import json
import pathlib
import random
import struct

PIXELS = 28 * 28


def load_digits(src):
    examples = []
    for label in range(10):
        flat = json.loads((src / f"{label}.json").read_text())["data"]
        if len(flat) % PIXELS:
            raise SystemExit(f"{label}.json: length {len(flat)} is not a multiple of {PIXELS}")
        for start in range(0, len(flat), PIXELS):
            pixels = bytes(round(v * 255) for v in flat[start:start + PIXELS])
            examples.append((pixels, label))
    return examples


def write_split(out, prefix, examples):
    with open(out / f"{prefix}-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 2051, len(examples), 28, 28))
        for pixels, _ in examples:
            f.write(pixels)
    with open(out / f"{prefix}-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 2049, len(examples)))
        f.write(bytes(label for _, label in examples))


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("digits_dir", type=pathlib.Path)
    parser.add_argument("out_dir", type=pathlib.Path)
    parser.add_argument("--test-count", type=int, default=1000)
    parser.add_argument("--seed", type=int, default=20180301)
    args = parser.parse_args()

    examples = load_digits(args.digits_dir)
    random.Random(args.seed).shuffle(examples)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    write_split(args.out_dir, "t10k", examples[:args.test_count])
    write_split(args.out_dir, "train", examples[args.test_count:])
    print(f"wrote {len(examples) - args.test_count} train and {args.test_count} test examples"
          f" to {args.out_dir}")


if __name__ == "__main__":
    main()
