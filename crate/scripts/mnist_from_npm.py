#!/usr/bin/env python3
"""Convert the digits bundled in the npm `mnist` package into IDX files.

The package stores ~10k MNIST digits as per-class JSON arrays of pixel
intensities rounded to three decimals. Each value is mapped back to the
original byte with round(v * 255), which is lossless at that precision.

usage: mnist_from_npm.py <unpacked-package-dir> <out-dir>
"""
import gzip
import json
import os
import struct
import sys


def main(pkg, out):
    images = []
    labels = []
    for digit in range(10):
        with open(os.path.join(pkg, "src", "digits", f"{digit}.json")) as f:
            data = json.load(f)["data"]
        assert len(data) % 784 == 0
        for start in range(0, len(data), 784):
            images.append(bytes(int(round(v * 255)) for v in data[start:start + 784]))
            labels.append(digit)
    n = len(images)
    os.makedirs(out, exist_ok=True)
    # mtime=0 keeps the gzip output byte-stable across runs
    with gzip.GzipFile(os.path.join(out, "t10k-images-idx3-ubyte.gz"), "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 2051, n, 28, 28))
        for img in images:
            f.write(img)
    with gzip.GzipFile(os.path.join(out, "t10k-labels-idx1-ubyte.gz"), "wb", mtime=0) as f:
        f.write(struct.pack(">II", 2049, n))
        f.write(bytes(labels))
    print(f"wrote {n} images to {out}")


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
