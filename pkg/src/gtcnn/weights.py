"""Bit-exact binary serialization of a model: config, parameters, BN stats.

Layout (little-endian): magic "GTCW", u32 version=1, config block
(u8 c_in, u16 c, u8 depth, u8 stages, u8 gate, u8 use_1x1), u32 tensor
count, then per tensor: u16 name length, UTF-8 name, u8 dtype (0 = f32),
u8 rank, rank x u32 dims, raw float32 values. Tensor order is the fixed
topological order of GtcnnModel.named_parameters() + named_stats().
"""

from __future__ import annotations

import io
import struct
from typing import BinaryIO, Union

import numpy as np

from gtcnn.model import GateKind, GtcnnConfig, GtcnnModel

MAGIC = b"GTCW"
VERSION = 1
DTYPE_F32 = 0

_GATE_CODES = {GateKind.CHANNEL_SOFTMAX: 0, GateKind.SIGMOID: 1}
_GATE_FROM_CODE = {v: k for k, v in _GATE_CODES.items()}


class WeightsFormatError(ValueError):
    pass


def _entries(model: GtcnnModel) -> list[tuple[str, np.ndarray]]:
    out = [(name, p.data) for name, p in model.named_parameters()]
    out.extend(model.named_stats())
    return out


def save_weights(model: GtcnnModel, dest: Union[str, BinaryIO]) -> None:
    """Writes the model to a path or binary stream (always float32 payload)."""
    cfg = model.config
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    buf.write(
        struct.pack(
            "<BHBBBB",
            cfg.c_in,
            cfg.c,
            cfg.depth,
            cfg.stages,
            _GATE_CODES[cfg.gate],
            1 if cfg.use_1x1 else 0,
        )
    )
    entries = _entries(model)
    buf.write(struct.pack("<I", len(entries)))
    for name, arr in entries:
        encoded = name.encode("utf-8")
        buf.write(struct.pack("<H", len(encoded)))
        buf.write(encoded)
        buf.write(struct.pack("<BB", DTYPE_F32, arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    payload = buf.getvalue()
    if isinstance(dest, (str, bytes)):
        with open(dest, "wb") as f:
            f.write(payload)
    else:
        dest.write(payload)


def _read_exact(f: BinaryIO, size: int, what: str) -> bytes:
    data = f.read(size)
    if len(data) != size:
        raise WeightsFormatError(f"truncated file while reading {what}")
    return data


def load_weights(source: Union[str, BinaryIO]) -> GtcnnModel:
    """Rebuilds a model from a weights file, validating structure throughout.

    Rejects bad magic/version, malformed configs, and any name, shape, or
    length mismatch against the architecture the embedded config implies.
    Never returns a partially filled model.
    """
    if isinstance(source, (str, bytes)):
        with open(source, "rb") as f:
            return load_weights(f)
    f = source

    if _read_exact(f, 4, "magic") != MAGIC:
        raise WeightsFormatError("bad magic: not a GTCW weights file")
    (version,) = struct.unpack("<I", _read_exact(f, 4, "version"))
    if version != VERSION:
        raise WeightsFormatError(f"unsupported version {version} (expected {VERSION})")
    c_in, c, depth, stages, gate_code, use_1x1 = struct.unpack(
        "<BHBBBB", _read_exact(f, 7, "config block")
    )
    if gate_code not in _GATE_FROM_CODE:
        raise WeightsFormatError(f"unknown gate code {gate_code}")
    try:
        config = GtcnnConfig(
            c_in=c_in,
            c=c,
            depth=depth,
            stages=stages,
            gate=_GATE_FROM_CODE[gate_code],
            use_1x1=bool(use_1x1),
        )
    except ValueError as e:
        raise WeightsFormatError(f"invalid config: {e}") from e

    model = GtcnnModel(config, seed=None)
    expected = _entries(model)
    (count,) = struct.unpack("<I", _read_exact(f, 4, "tensor count"))
    if count != len(expected):
        raise WeightsFormatError(
            f"tensor count {count} != {len(expected)} expected for this config"
        )

    for name, arr in expected:
        (name_len,) = struct.unpack("<H", _read_exact(f, 2, "name length"))
        got_name = _read_exact(f, name_len, "tensor name").decode("utf-8")
        if got_name != name:
            raise WeightsFormatError(f"tensor order mismatch: got {got_name!r}, expected {name!r}")
        dtype_code, rank = struct.unpack("<BB", _read_exact(f, 2, f"{name} header"))
        if dtype_code != DTYPE_F32:
            raise WeightsFormatError(f"{name}: unsupported dtype code {dtype_code}")
        if rank != arr.ndim:
            raise WeightsFormatError(f"{name}: rank {rank} != expected {arr.ndim}")
        dims = struct.unpack(f"<{rank}I", _read_exact(f, 4 * rank, f"{name} dims"))
        if dims != arr.shape:
            raise WeightsFormatError(f"{name}: shape {dims} != expected {arr.shape}")
        raw = _read_exact(f, 4 * arr.size, f"tensor {name!r} values")
        arr[...] = np.frombuffer(raw, dtype="<f4").reshape(arr.shape)

    if f.read(1):
        raise WeightsFormatError("trailing bytes after last tensor")

    # stats came from the file; eval mode is immediately usable
    for layer in model.gcbrs:
        layer.cbr.bn.state.initialized = True
        for block in [*layer.gtl.enc, layer.gtl.mid, *layer.gtl.dec]:
            block.cbr0.bn.state.initialized = True
            block.cbr1.bn.state.initialized = True
    return model
