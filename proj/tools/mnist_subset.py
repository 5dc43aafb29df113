#!/usr/bin/env python3
"""Write MNIST digits 4 and 9 as IDX files (images.idx, labels.idx).

Source: the npm package `mnist` (1.1.0), which bundles 10000 MNIST digits as
pixel intensities in [0, 1]; they are rescaled to bytes.

Usage: tools/mnist_subset.py [--out data/mnist] [--tarball mnist-1.1.0.tgz]
Without --tarball the package is fetched with `npm pack mnist@1.1.0`.
"""

import argparse
import glob
import json
import os
import struct
import subprocess
import sys
import tarfile
import tempfile


def fetch_tarball(tmp):
    subprocess.run(["npm", "pack", "mnist@1.1.0", "--silent"], cwd=tmp, check=True, stdout=subprocess.DEVNULL)
    found = glob.glob(os.path.join(tmp, "mnist-*.tgz"))
    if not found:
        sys.exit("npm pack did not produce a tarball")
    return found[0]


def digit_images(tar, digit):
    values = json.load(tar.extractfile(f"package/src/digits/{digit}.json"))["data"]
    if len(values) % 784:
        sys.exit(f"digit {digit}: pixel count is not a multiple of 784")
    px = bytes(min(255, max(0, round(v * 255))) for v in values)
    return [px[i : i + 784] for i in range(0, len(px), 784)]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "data", "mnist"))
    ap.add_argument("--tarball")
    ap.add_argument("--digits", default="4,9")
    args = ap.parse_args()
    digits = [int(d) for d in args.digits.split(",")]

    with tempfile.TemporaryDirectory() as tmp:
        path = args.tarball or fetch_tarball(tmp)
        with tarfile.open(path) as tar:
            per_digit = {d: digit_images(tar, d) for d in digits}

    images = [img for d in digits for img in per_digit[d]]
    labels = [d for d in digits for _ in per_digit[d]]
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "images.idx"), "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        for img in images:
            f.write(img)
    with open(os.path.join(args.out, "labels.idx"), "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))
    counts = ", ".join(f"{d}: {len(per_digit[d])}" for d in digits)
    print(f"wrote {len(images)} images ({counts}) to {os.path.normpath(args.out)}")


if __name__ == "__main__":
    main()
