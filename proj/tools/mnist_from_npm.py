#!/usr/bin/env python3
"""Convert the digit dump shipped in the `mnist` npm package into IDX files.

The npm package (https://www.npmjs.com/package/mnist) carries 10,000 MNIST
digits as JSON arrays of pixel intensities rounded to three decimals, which
is enough resolution to recover the original bytes exactly. The digits are
shuffled with a fixed seed and split into a training file and a test file.

    npm pack mnist && tar xzf mnist-*.tgz
    python3 tools/mnist_from_npm.py package/src/digits data/mnist
"""
import argparse
import json
import pathlib
import random
import struct


def write_images(path, images):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        for img in images:
            f.write(bytes(img))


def write_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("digits_dir")
    ap.add_argument("out_dir")
    ap.add_argument("--test", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=20250101)
    args = ap.parse_args()

    samples = []
    for digit in range(10):
        raw = json.loads((pathlib.Path(args.digits_dir) / f"{digit}.json").read_text())["data"]
        for k in range(len(raw) // 784):
            px = [int(round(v * 255)) for v in raw[k * 784:(k + 1) * 784]]
            samples.append((px, digit))

    random.Random(args.seed).shuffle(samples)
    test, train = samples[:args.test], samples[args.test:]

    out = pathlib.Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_images(out / "train-images-idx3-ubyte", [s[0] for s in train])
    write_labels(out / "train-labels-idx1-ubyte", [s[1] for s in train])
    write_images(out / "t10k-images-idx3-ubyte", [s[0] for s in test])
    write_labels(out / "t10k-labels-idx1-ubyte", [s[1] for s in test])
    print(f"train={len(train)} test={len(test)} -> {out}")


if __name__ == "__main__":
    main()
