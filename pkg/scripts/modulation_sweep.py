#!/usr/bin/env python3
"""Sweep the texture-shift parameter on a trained model and write each result.

Produces a row of denoised images for lambda from -0.5 to 0.5 (default step
0.25) so the continuous texture-strength change is visible side by side.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from gtcnn.model import Modulation  # noqa: E402
from gtcnn.pnm import PnmImage, read_pnm, write_pnm  # noqa: E402
from gtcnn.training import add_awgn, clamp01, psnr  # noqa: E402
from gtcnn.weights import load_weights  # noqa: E402


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--model", required=True)
    parser.add_argument("--image", required=True, help="clean PGM/PPM input")
    parser.add_argument("--out-dir", default="sweep")
    parser.add_argument("--sigma", type=float, default=25.0)
    parser.add_argument("--step", type=float, default=0.25)
    parser.add_argument("--stage", type=int, default=None,
                        help="skip stage to shift (default: 2, capped to S-1)")
    parser.add_argument("--layer", type=int, default=0)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    model = load_weights(args.model)
    stage = args.stage if args.stage is not None else min(2, model.config.stages - 1)
    clean = read_pnm(args.image).to_tensor()
    noisy = add_awgn(clean, args.sigma, np.random.default_rng(args.seed))

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_pnm(PnmImage.from_tensor(clamp01(noisy)), str(out_dir / "noisy.pgm"))

    lam = -0.5
    while lam <= 0.5 + 1e-9:
        mod = Modulation(lam, stage=stage, layer=args.layer) if lam != 0 else None
        y_hat, _ = model.forward(noisy, mod=mod)
        name = f"lambda{lam:+.2f}.pgm".replace("+", "p").replace("-", "m")
        write_pnm(PnmImage.from_tensor(clamp01(y_hat)), str(out_dir / name))
        print(f"lambda {lam:+.2f}: PSNR {psnr(clamp01(y_hat), clean):6.2f} dB -> {name}")
        lam += args.step
    return 0


if __name__ == "__main__":
    sys.exit(main())
