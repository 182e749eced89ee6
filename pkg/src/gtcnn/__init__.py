"""Gated-texture CNN image denoiser: tensor engine, model, training, and serving."""

from gtcnn.tensor import BnState, Tape, Tensor4, grad_check

__all__ = ["BnState", "Tape", "Tensor4", "grad_check"]
