#!/usr/bin/env python3
"""Convert the `mnist` npm package (https://www.npmjs.com/package/mnist) into
IDX files compatible with the original MNIST distribution.

The npm package ships ~1000 real MNIST images per digit class (10000 total) as
JSON arrays of pixel intensities in [0, 1] (rounded to three decimals, which
round-trips exactly to the original byte values). This script rebuilds the raw
bytes and writes a train/test split in big-endian IDX format:

    train-images-idx3-ubyte / train-labels-idx1-ubyte  (8900 images)
    t10k-images-idx3-ubyte  / t10k-labels-idx1-ubyte   (110 per class, 1100)

Images within each split are interleaved round-robin over the classes so the
files are not sorted by label.

Usage: make_mnist_idx.py <path-to-npm-mnist-package> <output-dir>
"""

import json
import os
import struct
import sys

TEST_PER_CLASS = 110
SIDE = 28


def read_digit(pkg_dir, digit):
    with open(os.path.join(pkg_dir, "src", "digits", f"{digit}.json")) as f:
        data = json.load(f)["data"]
    n = len(data) // (SIDE * SIDE)
    images = []
    for i in range(n):
        px = data[i * SIDE * SIDE:(i + 1) * SIDE * SIDE]
        images.append(bytes(round(v * 255) for v in px))
    return images


def write_idx(out_dir, prefix, images, labels):
    with open(os.path.join(out_dir, f"{prefix}-images-idx3-ubyte"), "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), SIDE, SIDE))
        for img in images:
            f.write(img)
    with open(os.path.join(out_dir, f"{prefix}-labels-idx1-ubyte"), "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main():
    pkg_dir, out_dir = sys.argv[1], sys.argv[2]
    os.makedirs(out_dir, exist_ok=True)
    per_class = [read_digit(pkg_dir, d) for d in range(10)]

    train_imgs, train_labels, test_imgs, test_labels = [], [], [], []
    i = 0
    while any(len(v) - TEST_PER_CLASS > i for v in per_class):
        for d in range(10):
            if i < len(per_class[d]) - TEST_PER_CLASS:
                train_imgs.append(per_class[d][i])
                train_labels.append(d)
        i += 1
    for i in range(TEST_PER_CLASS):
        for d in range(10):
            test_imgs.append(per_class[d][len(per_class[d]) - TEST_PER_CLASS + i])
            test_labels.append(d)

    write_idx(out_dir, "train", train_imgs, train_labels)
    write_idx(out_dir, "t10k", test_imgs, test_labels)
    print(f"wrote {len(train_imgs)} train / {len(test_imgs)} test images to {out_dir}")


if __name__ == "__main__":
    main()
