#!/usr/bin/env python3
"""Build data/mnist-subset-{images,labels}.idx from the npm `mnist` package.

    npm install mnist@1.1.0
    python3 scripts/make_mnist_subset.py node_modules/mnist data

The package stores MNIST digits as 28x28 floats rounded to three decimals;
they are re-quantised to bytes. Digits are interleaved 0..9 so every prefix
is class balanced.
"""
import json
import struct
import sys
from pathlib import Path

PER_CLASS = 120
SIDE = 28


def main(pkg: Path, out: Path) -> None:
    digits = []
    for d in range(10):
        flat = json.loads((pkg / "src" / "digits" / f"{d}.json").read_text())["data"]
        n = len(flat) // (SIDE * SIDE)
        if n < PER_CLASS:
            raise SystemExit(f"digit {d}: only {n} images")
        digits.append([flat[k * SIDE * SIDE:(k + 1) * SIDE * SIDE] for k in range(PER_CLASS)])

    images = bytearray(struct.pack(">IIII", 0x803, 10 * PER_CLASS, SIDE, SIDE))
    labels = bytearray(struct.pack(">II", 0x801, 10 * PER_CLASS))
    for k in range(PER_CLASS):
        for d in range(10):
            images += bytes(min(255, max(0, round(v * 255))) for v in digits[d][k])
            labels.append(d)

    out.mkdir(parents=True, exist_ok=True)
    (out / "mnist-subset-images.idx").write_bytes(images)
    (out / "mnist-subset-labels.idx").write_bytes(labels)


if __name__ == "__main__":
    main(Path(sys.argv[1]), Path(sys.argv[2]))
