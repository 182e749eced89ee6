#!/usr/bin/env python3
"""Desk-scale training experiment: small model, synthetic corpus, PSNR report.

Reproduces the substituted acceptance property end to end: trains
C=16/S=2/D1 at sigma=25 and reports held-out noisy vs denoised PSNR.
"""

import argparse
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from make_corpus import synth  # noqa: E402

from gtcnn.model import GtcnnConfig, GtcnnModel  # noqa: E402
from gtcnn.tensor import Tensor4  # noqa: E402
from gtcnn.training import TrainConfig, add_awgn, clamp01, psnr, train  # noqa: E402
from gtcnn.weights import save_weights  # noqa: E402


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="smoke.gtcw")
    parser.add_argument("--steps", type=int, default=300)
    parser.add_argument("--sigma", type=float, default=25.0)
    parser.add_argument("--channels", type=int, default=16)
    parser.add_argument("--stages", type=int, default=2)
    parser.add_argument("--images", type=int, default=6)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    corpus = [
        Tensor4(synth(s, 96).astype(np.float32)[None, None]) for s in range(args.images)
    ]
    holdout = Tensor4(synth(99, 96).astype(np.float32)[None, None, :48, :48])

    model = GtcnnModel(
        GtcnnConfig(c_in=1, c=args.channels, depth=1, stages=args.stages), seed=args.seed
    )
    config = TrainConfig(
        sigma=args.sigma, patch=48, stride=48, batch=4, steps=args.steps, seed=args.seed
    )
    t0 = time.time()
    model, log = train(model, corpus, config)
    print(f"trained {args.steps} steps in {time.time() - t0:.1f}s, "
          f"loss {log.losses()[0]:.5f} -> {log.losses()[-1]:.5f}")

    noisy = add_awgn(holdout, args.sigma, np.random.default_rng(args.seed + 1))
    y_hat, _ = model.forward(noisy)
    noisy_db = psnr(clamp01(noisy), holdout)
    denoised_db = psnr(clamp01(y_hat), holdout)
    print(f"held-out: noisy {noisy_db:.2f} dB, denoised {denoised_db:.2f} dB "
          f"({denoised_db - noisy_db:+.2f} dB)")

    save_weights(model, args.out)
    log.write_csv(args.out + ".csv")
    print(f"saved {args.out} and {args.out}.csv")
    return 0


if __name__ == "__main__":
    sys.exit(main())
