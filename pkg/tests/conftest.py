"""Shared helpers: synthetic clean images and the desk-scale smoke model."""

import numpy as np
import pytest

from gtcnn.model import GtcnnConfig, GtcnnModel
from gtcnn.tensor import Tensor4
from gtcnn.training import TrainConfig, train


def synth_image(seed: int, h: int = 96, w: int = 96, channels: int = 1) -> Tensor4:
    """Piecewise-smooth test scene: sinusoid mixture plus hard-edged boxes."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64) / max(h, w)
    planes = []
    for _ in range(channels):
        img = 0.5 * np.ones((h, w))
        for _ in range(4):
            fx, fy = rng.uniform(0.5, 4, 2)
            phase = rng.uniform(0, 2 * np.pi)
            img += rng.uniform(0.05, 0.2) * np.sin(2 * np.pi * (fx * xx + fy * yy) + phase)
        for _ in range(3):
            i0 = rng.integers(0, h - 20)
            j0 = rng.integers(0, w - 20)
            img[i0 : i0 + rng.integers(8, 20), j0 : j0 + rng.integers(8, 20)] += rng.uniform(
                -0.25, 0.25
            )
        planes.append(np.clip(img, 0, 1))
    return Tensor4(np.stack(planes).astype(np.float32)[None])


def synth_corpus(count: int = 6, h: int = 96, w: int = 96) -> list[Tensor4]:
    return [synth_image(seed, h, w) for seed in range(count)]


SMOKE_SIGMA = 25.0


@pytest.fixture(scope="session")
def smoke_model():
    """Desk-scale trained model (C=16, S=2, D1): 24 patches, 300 steps, sigma 25.

    Session-scoped because several suites exercise it; takes ~45 s once.
    """
    model = GtcnnModel(GtcnnConfig(c_in=1, c=16, depth=1, stages=2), seed=0)
    config = TrainConfig(sigma=SMOKE_SIGMA, patch=48, stride=48, batch=4, steps=300, seed=0)
    model, log = train(model, synth_corpus(), config)
    return model, log


@pytest.fixture()
def holdout_image():
    """A clean 48x48 scene none of the training patches came from."""
    return Tensor4(synth_image(99).data[:, :, :48, :48].copy())
