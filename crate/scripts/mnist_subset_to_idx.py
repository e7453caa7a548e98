#!/usr/bin/env python3
"""Convert the 10,000 MNIST digits bundled in the `mnist` npm package into
gzipped IDX files with a fixed 6000/4000 train/test split.

    npm pack mnist@1.1.0 && tar xzf mnist-1.1.0.tgz
    python3 scripts/mnist_subset_to_idx.py package/src/digits data/mnist-10k
"""
import gzip
import json
import struct
import sys
from pathlib import Path

import numpy as np

TRAIN = 6000
SPLIT_SEED = 20230101


def write_images(path, images):
    n = images.shape[0]
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x00000803, n, 28, 28))
        f.write(images.astype(np.uint8).tobytes())


def write_labels(path, labels):
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x00000801, labels.shape[0]))
        f.write(labels.astype(np.uint8).tobytes())


def main(src, dst):
    src, dst = Path(src), Path(dst)
    dst.mkdir(parents=True, exist_ok=True)
    images, labels = [], []
    for digit in range(10):
        data = np.array(json.loads((src / f"{digit}.json").read_text())["data"])
        data = data.reshape(-1, 784)
        images.append(np.rint(data * 255.0).clip(0, 255))
        labels.append(np.full(data.shape[0], digit))
    images = np.concatenate(images)
    labels = np.concatenate(labels)
    perm = np.random.default_rng(SPLIT_SEED).permutation(images.shape[0])
    images, labels = images[perm], labels[perm]
    write_images(dst / "train-images-idx3-ubyte.gz", images[:TRAIN])
    write_labels(dst / "train-labels-idx1-ubyte.gz", labels[:TRAIN])
    write_images(dst / "t10k-images-idx3-ubyte.gz", images[TRAIN:])
    write_labels(dst / "t10k-labels-idx1-ubyte.gz", labels[TRAIN:])
    print(f"wrote {TRAIN} train / {images.shape[0] - TRAIN} test to {dst}")


if __name__ == "__main__":
    main(*sys.argv[1:3])
