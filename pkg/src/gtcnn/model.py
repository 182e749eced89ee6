"""The gated-texture denoising network.

The noise stream is input conv -> L gated CBR layers -> output conv, with the
clean estimate recovered through the global residual: the network predicts
the noise field and the caller gets input minus prediction.

Each gated CBR layer runs a plain conv/batchnorm/relu unit in parallel with a
U-Net-shaped texture subnetwork whose gated output (channelwise softmax by
default) multiplies the unit's features elementwise. The texture subnetwork
never grows its channel count, which is what keeps the parameter budget flat.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

from gtcnn import tensor as T
from gtcnn.tensor import Tape, Tensor4

LAMBDA_MIN, LAMBDA_MAX = -0.5, 0.5


class GateKind(enum.Enum):
    CHANNEL_SOFTMAX = "softmax"
    SIGMOID = "sigmoid"


@dataclass(frozen=True)
class GtcnnConfig:
    """Architecture hyperparameters.

    c_in: image channels (1 grayscale, 3 color). c: feature channels.
    depth: number of gated CBR layers. stages: pooling stages in each texture
    subnetwork (0 collapses it to two chained double-CBR blocks). use_1x1
    appends a bias-carrying 1x1 conv after the last decoder block, used by
    the deepest configuration to stabilize training.
    """

    c_in: int = 1
    c: int = 64
    depth: int = 1
    stages: int = 4
    gate: GateKind = GateKind.CHANNEL_SOFTMAX
    use_1x1: bool = False

    def __post_init__(self):
        if self.c_in not in (1, 3):
            raise ValueError(f"c_in must be 1 or 3, got {self.c_in}")
        if self.c < 1:
            raise ValueError(f"c must be >= 1, got {self.c}")
        if self.depth < 1:
            raise ValueError(f"depth must be >= 1, got {self.depth}")
        if self.stages < 0:
            raise ValueError(f"stages must be >= 0, got {self.stages}")


@dataclass
class Modulation:
    """Elementwise shift of one recorded skip tensor at inference time.

    lam in [-0.5, 0.5] steers texture strength; stage picks which skip of the
    target layer's texture subnetwork is shifted, layer picks the gated CBR
    layer. Values outside the lam range are clamped here at the API boundary.
    """

    lam: float
    stage: int = 2
    layer: int = 0

    def clamped(self) -> "Modulation":
        return Modulation(min(max(self.lam, LAMBDA_MIN), LAMBDA_MAX), self.stage, self.layer)


def _init_conv_weight(shape, rng: Optional[np.random.Generator], dtype) -> Tensor4:
    c_out, c_in, k, _ = shape
    if rng is None:
        return Tensor4(np.zeros(shape, dtype=dtype))
    std = math.sqrt(2.0 / (c_in * k * k))
    return Tensor4((rng.standard_normal(shape) * std).astype(dtype))


class Conv2d:
    def __init__(self, c_in: int, c_out: int, k: int, bias: bool, rng, dtype):
        self.weight = _init_conv_weight((c_out, c_in, k, k), rng, dtype)
        self.bias = Tensor4(np.zeros((1, c_out, 1, 1), dtype=dtype)) if bias else None

    def forward(self, x: Tensor4, tape: Optional[Tape]) -> Tensor4:
        return T.conv2d(x, self.weight, self.bias, tape)

    def named_parameters(self, prefix: str) -> Iterator[tuple[str, Tensor4]]:
        yield f"{prefix}.weight", self.weight
        if self.bias is not None:
            yield f"{prefix}.bias", self.bias


class BatchNorm2d:
    def __init__(self, c: int, rng, dtype):
        self.gamma = Tensor4(np.ones((1, c, 1, 1), dtype=dtype))
        self.beta = Tensor4(np.zeros((1, c, 1, 1), dtype=dtype))
        self.state = T.BnState.for_channels(c, dtype=dtype)

    def forward(self, x: Tensor4, tape: Optional[Tape], train: bool) -> Tensor4:
        return T.batchnorm2d(x, self.gamma, self.beta, self.state, train, tape)

    def named_parameters(self, prefix: str) -> Iterator[tuple[str, Tensor4]]:
        yield f"{prefix}.gamma", self.gamma
        yield f"{prefix}.beta", self.beta

    def named_stats(self, prefix: str) -> Iterator[tuple[str, np.ndarray]]:
        yield f"{prefix}.running_mean", self.state.running_mean
        yield f"{prefix}.running_var", self.state.running_var


class Cbr:
    """conv3x3 (no bias; the shift is redundant with beta) -> batchnorm -> relu."""

    def __init__(self, c_in: int, c_out: int, rng, dtype):
        self.conv = Conv2d(c_in, c_out, 3, bias=False, rng=rng, dtype=dtype)
        self.bn = BatchNorm2d(c_out, rng, dtype)

    def forward(self, x: Tensor4, tape: Optional[Tape], train: bool) -> Tensor4:
        return T.relu(self.bn.forward(self.conv.forward(x, tape), tape, train), tape)

    def named_parameters(self, prefix: str):
        yield from self.conv.named_parameters(f"{prefix}.conv")
        yield from self.bn.named_parameters(f"{prefix}.bn")

    def named_stats(self, prefix: str):
        yield from self.bn.named_stats(f"{prefix}.bn")


class Dcbr:
    """Two chained CBR units; the first may contract 2C -> C after a concat."""

    def __init__(self, c_in: int, c_out: int, rng, dtype):
        self.cbr0 = Cbr(c_in, c_out, rng, dtype)
        self.cbr1 = Cbr(c_out, c_out, rng, dtype)

    def forward(self, x: Tensor4, tape: Optional[Tape], train: bool) -> Tensor4:
        return self.cbr1.forward(self.cbr0.forward(x, tape, train), tape, train)

    def named_parameters(self, prefix: str):
        yield from self.cbr0.named_parameters(f"{prefix}.cbr0")
        yield from self.cbr1.named_parameters(f"{prefix}.cbr1")

    def named_stats(self, prefix: str):
        yield from self.cbr0.named_stats(f"{prefix}.cbr0")
        yield from self.cbr1.named_stats(f"{prefix}.cbr1")


class Gtl:
    """Texture-estimating U-Net that keeps C channels at every stage.

    Encoder blocks record their outputs as skip tensors e_0..e_{S-1} before
    pooling; the decoder upsamples, concatenates (upsampled, skip) and runs a
    contracting double-CBR per stage. Inputs of arbitrary size are
    reflect-padded (bottom/right) to a multiple of 2^S and cropped back after.
    With stages=0 the subnetwork is exactly two chained double-CBR blocks.
    """

    def __init__(self, c: int, stages: int, gate: GateKind, use_1x1: bool, rng, dtype):
        self.stages = stages
        self.gate = gate
        self.enc = [Dcbr(c, c, rng, dtype) for _ in range(max(stages, 1))]
        self.mid = Dcbr(c, c, rng, dtype)
        self.dec = [Dcbr(2 * c, c, rng, dtype) for _ in range(stages)]
        self.out1x1 = Conv2d(c, c, 1, bias=True, rng=rng, dtype=dtype) if use_1x1 else None

    def forward(
        self,
        x: Tensor4,
        tape: Optional[Tape],
        train: bool,
        mod: Optional[Modulation] = None,
    ) -> tuple[Tensor4, list[Tensor4]]:
        """Returns (gate tensor t, recorded skip tensors)."""
        if mod is not None and not 0 <= mod.stage < self.stages:
            raise ValueError(
                f"modulation stage {mod.stage} out of range [0, {self.stages})"
            )
        h_in, w_in = x.h, x.w
        skips: list[Tensor4] = []

        if self.stages == 0:
            h = self.enc[0].forward(x, tape, train)
            h = self.mid.forward(h, tape, train)
        else:
            multiple = 1 << self.stages
            pad_h = (-h_in) % multiple
            pad_w = (-w_in) % multiple
            h = T.pad_reflect_br(x, pad_h, pad_w, tape)
            for s in range(self.stages):
                h = self.enc[s].forward(h, tape, train)
                skips.append(h)
                h, _ = T.maxpool2x2(h, tape)
            h = self.mid.forward(h, tape, train)
            for s in reversed(range(self.stages)):
                up = T.upsample_nearest2x(h, tape)
                skip = skips[s]
                if mod is not None and mod.stage == s and mod.lam != 0.0:
                    skip = T.add_scalar(skip, mod.lam, tape)
                h = self.dec[s].forward(T.concat_channels(up, skip, tape), tape, train)

        if self.out1x1 is not None:
            h = self.out1x1.forward(h, tape)
        if self.gate is GateKind.CHANNEL_SOFTMAX:
            t = T.softmax_channels(h, tape)
        else:
            t = T.sigmoid(h, tape)
        return T.crop_tl(t, h_in, w_in, tape), skips

    def named_parameters(self, prefix: str):
        for s, block in enumerate(self.enc):
            yield from block.named_parameters(f"{prefix}.enc{s}")
        yield from self.mid.named_parameters(f"{prefix}.mid")
        for s, block in enumerate(self.dec):
            yield from block.named_parameters(f"{prefix}.dec{s}")
        if self.out1x1 is not None:
            yield from self.out1x1.named_parameters(f"{prefix}.out1x1")

    def named_stats(self, prefix: str):
        for s, block in enumerate(self.enc):
            yield from block.named_stats(f"{prefix}.enc{s}")
        yield from self.mid.named_stats(f"{prefix}.mid")
        for s, block in enumerate(self.dec):
            yield from block.named_stats(f"{prefix}.dec{s}")


class Gcbr:
    """Noise features gated by texture: theta(f) elementwise-times gate(f)."""

    def __init__(self, config: GtcnnConfig, rng, dtype):
        self.cbr = Cbr(config.c, config.c, rng, dtype)
        self.gtl = Gtl(config.c, config.stages, config.gate, config.use_1x1, rng, dtype)

    def forward(self, x, tape, train, mod: Optional[Modulation] = None) -> Tensor4:
        t, _ = self.gtl.forward(x, tape, train, mod)
        return T.mul(self.cbr.forward(x, tape, train), t, tape)

    def named_parameters(self, prefix: str):
        yield from self.cbr.named_parameters(f"{prefix}.cbr")
        yield from self.gtl.named_parameters(f"{prefix}.gtl")

    def named_stats(self, prefix: str):
        yield from self.cbr.named_stats(f"{prefix}.cbr")
        yield from self.gtl.named_stats(f"{prefix}.gtl")


class GtcnnModel:
    """Assembled network. Each gated layer owns a private texture subnetwork."""

    def __init__(self, config: GtcnnConfig, seed: Optional[int] = 0, dtype=np.float32):
        self.config = config
        rng = None if seed is None else np.random.default_rng(seed)
        self.input_conv = Conv2d(config.c_in, config.c, 3, bias=True, rng=rng, dtype=dtype)
        self.gcbrs = [Gcbr(config, rng, dtype) for _ in range(config.depth)]
        self.output_conv = Conv2d(config.c, config.c_in, 3, bias=True, rng=rng, dtype=dtype)

    def forward(
        self,
        x: Tensor4,
        mod: Optional[Modulation] = None,
        train: bool = False,
        tape: Optional[Tape] = None,
    ) -> tuple[Tensor4, Tensor4]:
        """Runs the noise stream; returns (clean estimate, noise estimate)."""
        if x.c != self.config.c_in:
            raise ValueError(f"input channels {x.c} != configured c_in {self.config.c_in}")
        if mod is not None:
            if not 0 <= mod.layer < self.config.depth:
                raise ValueError(
                    f"modulation layer {mod.layer} out of range [0, {self.config.depth})"
                )
            mod = mod.clamped()
        h = T.relu(self.input_conv.forward(x, tape), tape)
        for i, layer in enumerate(self.gcbrs):
            layer_mod = mod if mod is not None and mod.layer == i else None
            h = layer.forward(h, tape, train, layer_mod)
        n_raw = self.output_conv.forward(h, tape)
        y_hat = T.sub(x, n_raw, tape)
        # report the noise that was actually subtracted after rounding, so
        # x - y_hat == n_hat holds bitwise
        n_hat = T.sub(x, y_hat, tape)
        return y_hat, n_hat

    def named_parameters(self) -> list[tuple[str, Tensor4]]:
        """Learned parameters in the fixed topological order used on disk."""
        out = list(self.input_conv.named_parameters("input"))
        for i, layer in enumerate(self.gcbrs):
            out.extend(layer.named_parameters(f"gcbr{i}"))
        out.extend(self.output_conv.named_parameters("output"))
        return out

    def named_stats(self) -> list[tuple[str, np.ndarray]]:
        """BatchNorm running statistics, serialized but not learned."""
        out = []
        for i, layer in enumerate(self.gcbrs):
            out.extend(layer.named_stats(f"gcbr{i}"))
        return out

    def parameters(self) -> list[Tensor4]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def num_params(self) -> int:
        return sum(p.data.size for p in self.parameters())


def param_count(config: GtcnnConfig) -> int:
    """Exact learned-parameter total for a configuration.

    Counts conv weights, conv biases where present, and batchnorm
    gamma/beta; running statistics are excluded.
    """
    return GtcnnModel(config, seed=None).num_params()
