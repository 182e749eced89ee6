#!/usr/bin/env python3
"""Write a directory of synthetic clean PGM images for desk-scale experiments."""

import argparse
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from gtcnn.pnm import PnmImage, write_pnm  # noqa: E402


def synth(seed: int, size: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) / size
    img = 0.5 * np.ones((size, size))
    for _ in range(4):
        fx, fy = rng.uniform(0.5, 4, 2)
        img += rng.uniform(0.05, 0.2) * np.sin(2 * np.pi * (fx * xx + fy * yy) + rng.uniform(0, 6.28))
    for _ in range(3):
        i0, j0 = rng.integers(0, size - 20, 2)
        img[i0 : i0 + rng.integers(8, 20), j0 : j0 + rng.integers(8, 20)] += rng.uniform(-0.25, 0.25)
    return np.clip(img, 0, 1)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("out_dir")
    parser.add_argument("--count", type=int, default=8)
    parser.add_argument("--size", type=int, default=96)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(args.count):
        img = synth(args.seed + i, args.size)
        samples = np.rint(img * 255).astype(np.uint8)[..., None]
        write_pnm(PnmImage(samples), str(out / f"scene{i:02d}.pgm"))
    print(f"wrote {args.count} images to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
