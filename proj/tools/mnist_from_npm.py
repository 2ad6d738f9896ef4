#!/usr/bin/env python3
"""Build MNIST IDX files from the digits bundled with the npm `mnist` package.

The npm package ships 10,000 real MNIST digits as JSON arrays of pixel/255
values (rounded to three decimals). This script regroups them into the
standard IDX layout so the loaders and the offline test suite can use them:

    npm pack mnist && tar xzf mnist-*.tgz
    python3 tools/mnist_from_npm.py package data/mnist --train 5000 --test 1000
"""
import argparse
import json
import os
import random
import struct


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
    ap.add_argument("package_dir")
    ap.add_argument("out_dir")
    ap.add_argument("--train", type=int, default=5000)
    ap.add_argument("--test", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=20190401)
    args = ap.parse_args()

    samples = []
    for digit in range(10):
        with open(os.path.join(args.package_dir, "src", "digits", f"{digit}.json")) as f:
            raw = json.load(f)["data"]
        for start in range(0, len(raw) - 783, 784):
            pixels = [min(255, max(0, round(v * 255))) for v in raw[start:start + 784]]
            samples.append((pixels, digit))

    random.Random(args.seed).shuffle(samples)
    if args.train + args.test > len(samples):
        raise SystemExit(f"only {len(samples)} digits available")
    train = samples[:args.train]
    test = samples[args.train:args.train + args.test]

    os.makedirs(args.out_dir, exist_ok=True)
    write_idx_images(os.path.join(args.out_dir, "train-images-idx3-ubyte"), [s[0] for s in train])
    write_idx_labels(os.path.join(args.out_dir, "train-labels-idx1-ubyte"), [s[1] for s in train])
    write_idx_images(os.path.join(args.out_dir, "t10k-images-idx3-ubyte"), [s[0] for s in test])
    write_idx_labels(os.path.join(args.out_dir, "t10k-labels-idx1-ubyte"), [s[1] for s in test])
    print(f"wrote {len(train)} train / {len(test)} test digits to {args.out_dir}")


if __name__ == "__main__":
    main()
