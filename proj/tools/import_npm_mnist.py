#!/usr/bin/env python3
"""Convert the digit JSON files shipped in the npm `mnist` package into IDX files.

The package stores 10,000 MNIST digits grouped by class as pixel values
rounded to three decimals.  Rounding v*255 recovers the original byte exactly
because the byte spacing (1/255) exceeds the rounding step (0.001).

usage: import_npm_mnist.py <unpacked npm package dir> <output dir>
"""
import json
import os
import random
import struct
import sys


def main():
    if len(sys.argv) != 3:
        sys.exit(__doc__)
    pkg, out = sys.argv[1], sys.argv[2]
    samples = []
    for digit in range(10):
        with open(os.path.join(pkg, "src", "digits", f"{digit}.json")) as f:
            data = json.load(f)["data"]
        if len(data) % 784:
            sys.exit(f"digit {digit}: payload is not a multiple of 784")
        for i in range(0, len(data), 784):
            pix = bytes(min(255, max(0, round(v * 255))) for v in data[i:i + 784])
            samples.append((pix, digit))
    # class-grouped source order; a fixed shuffle keeps prefixes representative
    random.Random(20221).shuffle(samples)
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "train-images-idx3-ubyte"), "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(samples), 28, 28))
        for pix, _ in samples:
            f.write(pix)
    with open(os.path.join(out, "train-labels-idx1-ubyte"), "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(samples)))
        f.write(bytes(label for _, label in samples))
    print(f"wrote {len(samples)} images to {out}")


if __name__ == "__main__":
    main()
