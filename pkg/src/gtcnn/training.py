"""Desk-scale supervised training: noise synthesis, patch sampling, Adam with
cosine annealing, and PSNR evaluation."""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from gtcnn import tensor as T
from gtcnn.model import GtcnnModel
from gtcnn.tensor import Tape, Tensor4, mse_loss

__all__ = [
    "TrainConfig",
    "RunLog",
    "TrainingDiverged",
    "add_awgn",
    "sample_patches",
    "mse_loss",
    "Adam",
    "cosine_lr",
    "train",
    "psnr",
    "clamp01",
]


@dataclass
class TrainConfig:
    """Optimizer, schedule, noise, and patch settings for one run.

    sigma is the noise standard deviation in 8-bit pixel units (divided by
    255 internally; images live in [0, 1]).
    """

    sigma: float = 25.0
    patch: int = 48
    stride: int = 48
    batch: int = 16
    steps: int = 200
    lr0: float = 1e-3
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    checkpoint_every: int = 0
    eval_every: int = 0

    def validate(self, stages: int) -> None:
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if self.batch < 1:
            raise ValueError(f"batch must be >= 1, got {self.batch}")
        if self.patch < (1 << stages):
            raise ValueError(
                f"patch {self.patch} smaller than 2^stages = {1 << stages}"
            )


@dataclass
class StepRecord:
    step: int
    loss: float
    lr: float
    wall: float


@dataclass
class RunLog:
    steps: list[StepRecord] = field(default_factory=list)
    evals: list[tuple[int, float]] = field(default_factory=list)

    def losses(self) -> list[float]:
        return [r.loss for r in self.steps]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["step", "loss", "lr"])
            for r in self.steps:
                writer.writerow([r.step, repr(r.loss), repr(r.lr)])


class TrainingDiverged(RuntimeError):
    def __init__(self, step: int, lr: float):
        super().__init__(f"non-finite loss at step {step} (last lr {lr:g})")
        self.step = step
        self.lr = lr


def add_awgn(y: Tensor4, sigma: float, rng: np.random.Generator) -> Tensor4:
    """y plus i.i.d. Gaussian noise with std sigma/255. Not clamped."""
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return y.copy()
    noise = rng.standard_normal(y.shape, dtype=y.dtype)
    noise *= y.dtype.type(sigma / 255.0)
    return Tensor4(y.data + noise)


def sample_patches(image: Tensor4, patch: int, stride: int) -> list[Tensor4]:
    """Grid of patch crops; trailing pixels that don't fill a patch are dropped."""
    if image.h < patch or image.w < patch:
        raise ValueError(
            f"image {image.h}x{image.w} smaller than patch size {patch}"
        )
    out = []
    for i in range(0, image.h - patch + 1, stride):
        for j in range(0, image.w - patch + 1, stride):
            out.append(Tensor4(image.data[:, :, i : i + patch, j : j + patch].copy()))
    return out


def cosine_lr(t: int, total: int, lr0: float) -> float:
    """Half-cosine decay from lr0 at t=0 to 0 at t=total; no restarts."""
    if total == 0:
        raise ValueError("total steps must be > 0")
    if not 0 <= t <= total:
        raise ValueError(f"step {t} outside [0, {total}]")
    return 0.5 * lr0 * (1.0 + math.cos(math.pi * t / total))


class Adam:
    """Standard Adam with bias correction over a fixed parameter list."""

    def __init__(self, params: Sequence[Tensor4], beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self, lr: float) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1**self.t
        bc2 = 1.0 - b2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            if g is None:
                continue
            m += (1.0 - b1) * (g - m)
            v += (1.0 - b2) * (g * g - v)
            p.data -= (lr / bc1) * m / (np.sqrt(v / bc2) + self.eps)


def clamp01(x: Tensor4) -> Tensor4:
    return Tensor4(np.clip(x.data, 0.0, 1.0))


def psnr(a: Tensor4, b: Tensor4) -> float:
    """10*log10(1/mse) in dB for images in [0, 1]; +inf when identical.

    Callers clamp to [0, 1] before evaluation; this does not clamp.
    """
    if a.shape != b.shape:
        raise ValueError(f"psnr shape mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean((a.data.astype(np.float64) - b.data.astype(np.float64)) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def _patch_pool(corpus: Sequence[Tensor4], patch: int, stride: int) -> list[np.ndarray]:
    pool = []
    for image in corpus:
        pool.extend(p.data[0] for p in sample_patches(image, patch, stride))
    return pool


def train(
    model: GtcnnModel,
    corpus: Sequence[Tensor4],
    config: TrainConfig,
    holdout: Optional[Tensor4] = None,
    checkpoint_dir=None,
) -> tuple[GtcnnModel, RunLog]:
    """Runs the full loop; returns the model (BN stats frozen, eval-ready)
    and the per-step log.

    Each step draws a seeded batch of clean patches, synthesizes the noisy
    counterparts, minimizes the restored-vs-clean MSE, and applies Adam at
    the cosine-annealed rate. A non-finite loss aborts with the step number.
    """
    if not corpus:
        raise ValueError("training corpus is empty")
    config.validate(model.config.stages)

    pool = _patch_pool(corpus, config.patch, config.stride)
    rng = np.random.default_rng(config.seed)
    order = rng.permutation(len(pool))
    cursor = 0

    optimizer = Adam(model.parameters(), config.beta1, config.beta2, config.eps)
    log = RunLog()
    sigma = config.sigma

    if checkpoint_dir is not None:
        checkpoint_dir = Path(checkpoint_dir)
        checkpoint_dir.mkdir(parents=True, exist_ok=True)

    for step in range(config.steps):
        picks = []
        for _ in range(config.batch):
            if cursor == len(order):
                order = rng.permutation(len(pool))
                cursor = 0
            picks.append(pool[order[cursor]])
            cursor += 1
        clean = Tensor4(np.stack(picks))
        noisy = add_awgn(clean, sigma, rng)

        t0 = time.perf_counter()
        lr = cosine_lr(step, config.steps, config.lr0)
        tape = Tape()
        try:
            y_hat, _ = model.forward(noisy, train=True, tape=tape)
            loss = mse_loss(y_hat, clean, tape)
        except FloatingPointError as e:
            # the engine traps non-finite values before they reach the loss
            raise TrainingDiverged(step, lr) from e
        loss_value = loss.item()
        if not math.isfinite(loss_value):
            raise TrainingDiverged(step, lr)
        model.zero_grad()
        tape.backward(loss)
        optimizer.step(lr)
        tape.clear()
        log.steps.append(StepRecord(step, loss_value, lr, time.perf_counter() - t0))

        done = step + 1
        if config.eval_every and holdout is not None and done % config.eval_every == 0:
            log.evals.append((step, _holdout_psnr(model, holdout, sigma, config.seed)))
        if config.checkpoint_every and checkpoint_dir and done % config.checkpoint_every == 0:
            from gtcnn.weights import save_weights

            save_weights(model, str(checkpoint_dir / f"step{done:06d}.gtcw"))
            log.write_csv(checkpoint_dir / f"step{done:06d}.csv")

    return model, log


def _holdout_psnr(model: GtcnnModel, clean: Tensor4, sigma: float, seed: int) -> float:
    noisy = add_awgn(clean, sigma, np.random.default_rng(seed + 1))
    y_hat, _ = model.forward(noisy, train=False)
    return psnr(clamp01(y_hat), clean)
