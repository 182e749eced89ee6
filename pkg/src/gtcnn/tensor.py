"""Rank-4 tensor engine with tape-based reverse-mode differentiation.

Every value is a dense (batch, channels, height, width) array. Ops are free
functions that compute the forward result eagerly and, when handed a Tape,
record a closure that accumulates gradients into their inputs. Scalars
(losses) are tensors of shape (1, 1, 1, 1).

float32 is the working precision; float64 exists for finite-difference
verification of the backward passes (see grad_check).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

_FLOAT_DTYPES = (np.float32, np.float64)


class Tensor4:
    """Dense (n, c, h, w) array plus an optional same-shape gradient buffer."""

    __slots__ = ("data", "grad")

    def __init__(self, data, grad: Optional[np.ndarray] = None):
        arr = np.asarray(data)
        if arr.dtype not in _FLOAT_DTYPES:
            arr = arr.astype(np.float32)
        if arr.ndim != 4:
            raise ValueError(f"Tensor4 needs 4 dims (n, c, h, w), got shape {arr.shape}")
        self.data = np.ascontiguousarray(arr)
        if grad is not None and grad.shape != arr.shape:
            raise ValueError(f"grad shape {grad.shape} != data shape {arr.shape}")
        self.grad = grad

    # -- shape accessors -----------------------------------------------------
    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def c(self) -> int:
        return self.data.shape[1]

    @property
    def h(self) -> int:
        return self.data.shape[2]

    @property
    def w(self) -> int:
        return self.data.shape[3]

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    # -- gradient management ---------------------------------------------------
    def ensure_grad(self) -> np.ndarray:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        return self.grad

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad.fill(0.0)

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a scalar tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def copy(self) -> "Tensor4":
        return Tensor4(self.data.copy())

    @classmethod
    def zeros(cls, shape: Sequence[int], dtype=np.float32) -> "Tensor4":
        return cls(np.zeros(tuple(shape), dtype=dtype))

    @classmethod
    def full(cls, shape: Sequence[int], value: float, dtype=np.float32) -> "Tensor4":
        return cls(np.full(tuple(shape), value, dtype=dtype))

    @classmethod
    def scalar(cls, value: float, dtype=np.float32) -> "Tensor4":
        return cls(np.full((1, 1, 1, 1), value, dtype=dtype))

    def __repr__(self) -> str:
        return f"Tensor4(shape={self.shape}, dtype={self.data.dtype})"


class Tape:
    """Ordered record of executed differentiable ops.

    backward() replays the recorded closures in exact reverse execution
    order. Gradients accumulate into .grad buffers: calling backward twice
    without zeroing grads doubles-counts by design; zero grads between runs
    for fresh values. clear() drops the closures and with them every saved
    activation.
    """

    def __init__(self):
        self._nodes: list[Callable[[], None]] = []

    def record(self, backward_fn: Callable[[], None]) -> None:
        self._nodes.append(backward_fn)

    def __len__(self) -> int:
        return len(self._nodes)

    def backward(self, loss: Tensor4) -> None:
        if not self._nodes:
            raise ValueError("backward on an empty tape")
        if loss.data.size != 1:
            raise ValueError(f"loss must be scalar, got shape {loss.shape}")
        loss.ensure_grad()
        loss.grad += 1.0
        for node in reversed(self._nodes):
            node()

    def clear(self) -> None:
        self._nodes.clear()


def _check_finite(arr: np.ndarray, op: str) -> None:
    if not np.isfinite(arr).all():
        raise FloatingPointError(f"{op} produced non-finite values")


def _check_same_dtype(op: str, *tensors: Tensor4) -> None:
    dtypes = {t.dtype for t in tensors}
    if len(dtypes) > 1:
        raise ValueError(f"{op}: mixed dtypes {sorted(str(d) for d in dtypes)}")


# ---------------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------------

def conv2d(
    x: Tensor4,
    weight: Tensor4,
    bias: Optional[Tensor4] = None,
    tape: Optional[Tape] = None,
) -> Tensor4:
    """Shape-preserving cross-correlation with zero padding.

    weight is (c_out, c_in, k, k) with k in {1, 3}; padding is (k-1)/2 and
    stride is 1. bias, when given, is a per-channel (1, c_out, 1, 1) tensor.
    """
    _check_same_dtype("conv2d", *(t for t in (x, weight, bias) if t is not None))
    c_out, c_in, k, k2 = weight.shape
    if k != k2 or k not in (1, 3):
        raise ValueError(f"conv2d kernel must be square 1x1 or 3x3, got {k}x{k2}")
    if x.c != c_in:
        raise ValueError(f"conv2d input channels {x.c} != weight c_in {c_in}")
    if bias is not None and bias.shape != (1, c_out, 1, 1):
        raise ValueError(f"conv2d bias shape {bias.shape} != (1, {c_out}, 1, 1)")
    n, _, h, w = x.shape
    pad = (k - 1) // 2

    if pad:
        xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    else:
        xp = x.data
    win = sliding_window_view(xp, (k, k), axis=(2, 3))  # (n, c_in, h, w, k, k)
    col = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(
        n * h * w, c_in * k * k
    )
    w2 = weight.data.reshape(c_out, c_in * k * k)
    out2 = col @ w2.T
    if bias is not None:
        out2 += bias.data.reshape(1, c_out)
    out_data = np.ascontiguousarray(out2.reshape(n, h, w, c_out).transpose(0, 3, 1, 2))
    _check_finite(out_data, "conv2d")
    out = Tensor4(out_data)

    if tape is not None:
        def backward():
            g = out.grad
            if g is None:
                return
            g2 = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(n * h * w, c_out)
            if bias is not None:
                bias.ensure_grad()[...] += g2.sum(axis=0).reshape(1, c_out, 1, 1)
            weight.ensure_grad()[...] += (g2.T @ col).reshape(weight.shape)
            # dx is a shape-preserving correlation of g with the kernel
            # flipped spatially and transposed in its channel axes
            if pad:
                gp = np.pad(g, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
            else:
                gp = g
            gwin = sliding_window_view(gp, (k, k), axis=(2, 3))
            gcol = np.ascontiguousarray(gwin.transpose(0, 2, 3, 1, 4, 5)).reshape(
                n * h * w, c_out * k * k
            )
            wt = np.ascontiguousarray(
                weight.data[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
            ).reshape(c_in, c_out * k * k)
            dx2 = gcol @ wt.T
            x.ensure_grad()[...] += dx2.reshape(n, h, w, c_in).transpose(0, 3, 1, 2)

        tape.record(backward)
    return out


# ---------------------------------------------------------------------------
# batch normalization
# ---------------------------------------------------------------------------

@dataclass
class BnState:
    """Running statistics for one BatchNorm. momentum follows
    running = momentum * running + (1 - momentum) * batch."""

    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.9
    eps: float = 1e-5
    initialized: bool = False

    @classmethod
    def for_channels(cls, c: int, dtype=np.float32) -> "BnState":
        return cls(np.zeros(c, dtype=dtype), np.ones(c, dtype=dtype))


def batchnorm2d(
    x: Tensor4,
    gamma: Tensor4,
    beta: Tensor4,
    state: BnState,
    train: bool,
    tape: Optional[Tape] = None,
) -> Tensor4:
    """Per-channel normalization over (n, h, w).

    Train mode normalizes with batch statistics and updates the running
    stats; eval mode uses the running stats and requires them populated.
    """
    _check_same_dtype("batchnorm2d", x, gamma, beta)
    c = x.c
    if gamma.shape != (1, c, 1, 1) or beta.shape != (1, c, 1, 1):
        raise ValueError(
            f"batchnorm2d gamma/beta must be (1, {c}, 1, 1), got {gamma.shape}/{beta.shape}"
        )
    eps = x.dtype.type(state.eps)

    if train:
        mu = x.data.mean(axis=(0, 2, 3))
        var = x.data.var(axis=(0, 2, 3))
        inv = 1.0 / np.sqrt(var + eps)
        xhat = (x.data - mu.reshape(1, c, 1, 1)) * inv.reshape(1, c, 1, 1)
        m = state.momentum
        state.running_mean[...] = m * state.running_mean + (1.0 - m) * mu
        state.running_var[...] = m * state.running_var + (1.0 - m) * var
        state.initialized = True
    else:
        if not state.initialized:
            raise ValueError("batchnorm2d eval before any train step: running stats empty")
        inv = 1.0 / np.sqrt(state.running_var.astype(x.dtype) + eps)
        xhat = (x.data - state.running_mean.astype(x.dtype).reshape(1, c, 1, 1)) * inv.reshape(
            1, c, 1, 1
        )
    out_data = gamma.data * xhat + beta.data
    _check_finite(out_data, "batchnorm2d")
    out = Tensor4(out_data)

    if tape is not None:
        inv_r = inv.reshape(1, c, 1, 1)

        if train:
            m_count = x.n * x.h * x.w

            def backward():
                g = out.grad
                if g is None:
                    return
                dbeta = g.sum(axis=(0, 2, 3), keepdims=True)
                dgamma = (g * xhat).sum(axis=(0, 2, 3), keepdims=True)
                beta.ensure_grad()[...] += dbeta
                gamma.ensure_grad()[...] += dgamma
                gx = g * gamma.data
                x.ensure_grad()[...] += inv_r * (
                    gx
                    - gx.sum(axis=(0, 2, 3), keepdims=True) / m_count
                    - xhat * (gx * xhat).sum(axis=(0, 2, 3), keepdims=True) / m_count
                )

        else:

            def backward():
                g = out.grad
                if g is None:
                    return
                beta.ensure_grad()[...] += g.sum(axis=(0, 2, 3), keepdims=True)
                gamma.ensure_grad()[...] += (g * xhat).sum(axis=(0, 2, 3), keepdims=True)
                x.ensure_grad()[...] += g * gamma.data * inv_r

        tape.record(backward)
    return out


# ---------------------------------------------------------------------------
# elementwise nonlinearities
# ---------------------------------------------------------------------------

def relu(x: Tensor4, tape: Optional[Tape] = None) -> Tensor4:
    out = Tensor4(np.maximum(x.data, 0))

    if tape is not None:
        mask = x.data > 0

        def backward():
            if out.grad is not None:
                x.ensure_grad()[...] += out.grad * mask

        tape.record(backward)
    return out


def sigmoid(x: Tensor4, tape: Optional[Tape] = None) -> Tensor4:
    s = expit(x.data)
    out = Tensor4(s)

    if tape is not None:
        def backward():
            if out.grad is not None:
                x.ensure_grad()[...] += out.grad * s * (1.0 - s)

        tape.record(backward)
    return out


def softmax_channels(x: Tensor4, tape: Optional[Tape] = None) -> Tensor4:
    """Softmax across the channel axis at every (n, h, w) location."""
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=1, keepdims=True)
    _check_finite(s, "softmax_channels")
    out = Tensor4(s)

    if tape is not None:
        def backward():
            g = out.grad
            if g is None:
                return
            x.ensure_grad()[...] += s * (g - (g * s).sum(axis=1, keepdims=True))

        tape.record(backward)
    return out


# ---------------------------------------------------------------------------
# spatial reshaping
# ---------------------------------------------------------------------------

def maxpool2x2(x: Tensor4, tape: Optional[Tape] = None) -> tuple[Tensor4, np.ndarray]:
    """2x2 max pooling, stride 2. Returns (output, argmax indices).

    Indices are 0..3 in row-major window order; ties go to the first index,
    which is also where the gradient is routed.
    """
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"maxpool2x2 needs even h and w, got {h}x{w}")
    h2, w2 = h // 2, w // 2
    windows = np.ascontiguousarray(
        x.data.reshape(n, c, h2, 2, w2, 2).transpose(0, 1, 2, 4, 3, 5)
    ).reshape(n, c, h2, w2, 4)
    idx = windows.argmax(axis=-1)
    out_data = np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0]
    out = Tensor4(out_data)

    if tape is not None:
        def backward():
            g = out.grad
            if g is None:
                return
            dwin = np.zeros((n, c, h2, w2, 4), dtype=g.dtype)
            np.put_along_axis(dwin, idx[..., None], g[..., None], axis=-1)
            x.ensure_grad()[...] += dwin.reshape(n, c, h2, w2, 2, 2).transpose(
                0, 1, 2, 4, 3, 5
            ).reshape(n, c, h, w)

        tape.record(backward)
    return out, idx


def upsample_nearest2x(x: Tensor4, tape: Optional[Tape] = None) -> Tensor4:
    """Replicate every pixel into a 2x2 block."""
    out = Tensor4(x.data.repeat(2, axis=2).repeat(2, axis=3))

    if tape is not None:
        n, c, h, w = x.shape

        def backward():
            g = out.grad
            if g is None:
                return
            x.ensure_grad()[...] += g.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5))

        tape.record(backward)
    return out


def concat_channels(a: Tensor4, b: Tensor4, tape: Optional[Tape] = None) -> Tensor4:
    _check_same_dtype("concat_channels", a, b)
    if (a.n, a.h, a.w) != (b.n, b.h, b.w):
        raise ValueError(
            f"concat_channels spatial mismatch: {a.shape} vs {b.shape} (n, h, w must agree)"
        )
    out = Tensor4(np.concatenate((a.data, b.data), axis=1))

    if tape is not None:
        ca = a.c

        def backward():
            g = out.grad
            if g is None:
                return
            a.ensure_grad()[...] += g[:, :ca]
            b.ensure_grad()[...] += g[:, ca:]

        tape.record(backward)
    return out


def _reflect_indices(size: int, pad: int) -> np.ndarray:
    """Source index for each position of an array reflect-padded at the end."""
    idx = np.arange(size + pad)
    if size == 1:
        return np.zeros_like(idx)
    period = 2 * size - 2
    m = idx % period
    return np.where(m < size, m, period - m)


def pad_reflect_br(x: Tensor4, pad_h: int, pad_w: int, tape: Optional[Tape] = None) -> Tensor4:
    """Reflect-pad the bottom and right edges (top-left origin unchanged)."""
    if pad_h < 0 or pad_w < 0:
        raise ValueError(f"negative padding ({pad_h}, {pad_w})")
    if pad_h == 0 and pad_w == 0:
        return x
    n, c, h, w = x.shape
    ih = _reflect_indices(h, pad_h)
    iw = _reflect_indices(w, pad_w)
    out = Tensor4(x.data[:, :, ih[:, None], iw[None, :]])

    if tape is not None:
        def backward():
            g = out.grad
            if g is None:
                return
            dx = np.zeros_like(x.data)
            np.add.at(dx, (slice(None), slice(None), ih[:, None], iw[None, :]), g)
            x.ensure_grad()[...] += dx

        tape.record(backward)
    return out


def crop_tl(x: Tensor4, h: int, w: int, tape: Optional[Tape] = None) -> Tensor4:
    """Crop to the top-left (h, w) window."""
    if h > x.h or w > x.w:
        raise ValueError(f"crop {h}x{w} larger than input {x.h}x{x.w}")
    if h == x.h and w == x.w:
        return x
    out = Tensor4(x.data[:, :, :h, :w].copy())

    if tape is not None:
        def backward():
            if out.grad is not None:
                x.ensure_grad()[:, :, :h, :w] += out.grad

        tape.record(backward)
    return out


# ---------------------------------------------------------------------------
# arithmetic
# ---------------------------------------------------------------------------

def mul(a: Tensor4, b: Tensor4, tape: Optional[Tape] = None) -> Tensor4:
    """Hadamard product."""
    _check_same_dtype("mul", a, b)
    if a.shape != b.shape:
        raise ValueError(f"mul shape mismatch: {a.shape} vs {b.shape}")
    out = Tensor4(a.data * b.data)
    _check_finite(out.data, "mul")

    if tape is not None:
        def backward():
            g = out.grad
            if g is None:
                return
            a.ensure_grad()[...] += g * b.data
            b.ensure_grad()[...] += g * a.data

        tape.record(backward)
    return out


def sub(a: Tensor4, b: Tensor4, tape: Optional[Tape] = None) -> Tensor4:
    _check_same_dtype("sub", a, b)
    if a.shape != b.shape:
        raise ValueError(f"sub shape mismatch: {a.shape} vs {b.shape}")
    out = Tensor4(a.data - b.data)

    if tape is not None:
        def backward():
            g = out.grad
            if g is None:
                return
            a.ensure_grad()[...] += g
            b.ensure_grad()[...] -= g

        tape.record(backward)
    return out


def add_scalar(x: Tensor4, value: float, tape: Optional[Tape] = None) -> Tensor4:
    out = Tensor4(x.data + x.dtype.type(value))
    _check_finite(out.data, "add_scalar")

    if tape is not None:
        def backward():
            if out.grad is not None:
                x.ensure_grad()[...] += out.grad

        tape.record(backward)
    return out


def sum_all(x: Tensor4, tape: Optional[Tape] = None) -> Tensor4:
    out = Tensor4(x.data.sum().reshape(1, 1, 1, 1))

    if tape is not None:
        def backward():
            if out.grad is not None:
                x.ensure_grad()[...] += out.grad.reshape(())

        tape.record(backward)
    return out


def mse_loss(pred: Tensor4, target: Tensor4, tape: Optional[Tape] = None) -> Tensor4:
    """Mean of squared differences over all elements, as a scalar tensor."""
    _check_same_dtype("mse_loss", pred, target)
    if pred.shape != target.shape:
        raise ValueError(f"mse_loss shape mismatch: {pred.shape} vs {target.shape}")
    diff = pred.data - target.data
    out = Tensor4(np.mean(diff * diff).reshape(1, 1, 1, 1).astype(pred.dtype))

    if tape is not None:
        scale = 2.0 / diff.size

        def backward():
            g = out.grad
            if g is None:
                return
            d = (scale * g.reshape(())) * diff
            pred.ensure_grad()[...] += d
            target.ensure_grad()[...] -= d

        tape.record(backward)
    return out


# ---------------------------------------------------------------------------
# gradient verification
# ---------------------------------------------------------------------------

def grad_check(
    fn: Callable[..., Tensor4],
    inputs: Sequence[Tensor4],
    delta: float = 1e-5,
) -> float:
    """Central finite differences vs taped gradients; returns max relative error.

    fn(tape, *inputs) must build a fresh graph and return a scalar loss.
    Inputs must be float64 and small enough to perturb every coordinate.
    """
    for t in inputs:
        if t.dtype != np.float64:
            raise ValueError("grad_check requires float64 inputs")

    tape = Tape()
    loss = fn(tape, *inputs)
    if loss.data.size != 1:
        raise ValueError(f"grad_check loss must be scalar, got shape {loss.shape}")
    for t in inputs:
        t.zero_grad()
    tape.backward(loss)
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in inputs]
    tape.clear()

    max_rel = 0.0
    for t, an in zip(inputs, analytic):
        flat = t.data.reshape(-1)
        an_flat = an.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + delta
            f_plus = fn(None, *inputs).item()
            flat[i] = orig - delta
            f_minus = fn(None, *inputs).item()
            flat[i] = orig
            fd = (f_plus - f_minus) / (2.0 * delta)
            rel = abs(fd - an_flat[i]) / max(abs(fd), abs(an_flat[i]), 1e-8)
            max_rel = max(max_rel, rel)
    return max_rel
