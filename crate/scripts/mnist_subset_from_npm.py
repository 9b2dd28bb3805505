#!/usr/bin/env python3
"""Build the MNIST desk-scale subset in IDX format.

Source: the `mnist` npm package (https://github.com/cazala/mnist), which
bundles 10 000 MNIST digits as JSON arrays of pixel/255 rounded to three
decimals. Rounding error is at most 0.125 grey levels, so the original
bytes are recovered exactly by round(v * 255).

Usage:
    npm pack mnist && tar xzf mnist-1.1.0.tgz
    python3 scripts/mnist_subset_from_npm.py package data/mnist-subset

Writes train (6000) and val (1000) IDX pairs. The split is a fixed
permutation (Python `random.Random(20190101)`) of all 10 000 samples.
"""
import json
import random
import struct
import sys
from pathlib import Path

N_TRAIN = 6000
N_VAL = 1000


def load(pkg: Path):
    samples = []
    for digit in range(10):
        data = json.loads((pkg / "src" / "digits" / f"{digit}.json").read_text())["data"]
        assert len(data) % 784 == 0
        for i in range(len(data) // 784):
            px = bytes(round(v * 255) for v in data[i * 784:(i + 1) * 784])
            samples.append((px, digit))
    return samples


def write_idx(out: Path, prefix: str, samples):
    with open(out / f"{prefix}-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x803, len(samples), 28, 28))
        for px, _ in samples:
            f.write(px)
    with open(out / f"{prefix}-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x801, len(samples)))
        f.write(bytes(label for _, label in samples))


def main():
    pkg, out = Path(sys.argv[1]), Path(sys.argv[2])
    out.mkdir(parents=True, exist_ok=True)
    samples = load(pkg)
    random.Random(20190101).shuffle(samples)
    write_idx(out, "train", samples[:N_TRAIN])
    write_idx(out, "val", samples[N_TRAIN:N_TRAIN + N_VAL])


if __name__ == "__main__":
    main()
