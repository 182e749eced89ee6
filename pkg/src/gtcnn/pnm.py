"""Binary netpbm (P5 grayscale / P6 color) reading and writing.

8-bit only (maxval 255). Headers may contain comments and arbitrary
whitespace; files are written back with a canonical header so that
write(read(f)) reproduces canonical bytes exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from gtcnn.tensor import Tensor4


class PnmError(ValueError):
    pass


@dataclass
class PnmImage:
    """8-bit image with samples shaped (height, width, channels), channels 1 or 3."""

    samples: np.ndarray

    def __post_init__(self):
        s = self.samples
        if s.dtype != np.uint8 or s.ndim != 3 or s.shape[2] not in (1, 3):
            raise PnmError(
                f"samples must be uint8 (h, w, 1|3), got {s.dtype} {s.shape}"
            )

    @property
    def height(self) -> int:
        return self.samples.shape[0]

    @property
    def width(self) -> int:
        return self.samples.shape[1]

    @property
    def channels(self) -> int:
        return self.samples.shape[2]

    def to_tensor(self) -> Tensor4:
        """Scale to [0, 1] as a (1, c, h, w) float32 tensor."""
        data = self.samples.astype(np.float32) / np.float32(255.0)
        return Tensor4(data.transpose(2, 0, 1)[None])

    @classmethod
    def from_tensor(cls, t: Tensor4) -> "PnmImage":
        """Round-clamp a [0, 1] tensor back to 8-bit samples."""
        if t.n != 1 or t.c not in (1, 3):
            raise PnmError(f"expected (1, 1|3, h, w) tensor, got {t.shape}")
        scaled = np.clip(t.data[0], 0.0, 1.0) * 255.0
        return cls(np.rint(scaled).astype(np.uint8).transpose(1, 2, 0))


def _tokens(data: bytes):
    """Header tokens: whitespace-separated, with # comments running to EOL.

    Yields (token, offset_after_token); raw samples start one whitespace
    byte after the maxval token.
    """
    i = 0
    n = len(data)
    while i < n:
        ch = data[i : i + 1]
        if ch == b"#":
            while i < n and data[i : i + 1] not in (b"\n", b"\r"):
                i += 1
        elif ch.isspace():
            i += 1
        else:
            start = i
            while i < n and not data[i : i + 1].isspace() and data[i : i + 1] != b"#":
                i += 1
            yield data[start:i], i


def parse_pnm(data: bytes) -> PnmImage:
    reader = _tokens(data)
    try:
        magic, _ = next(reader)
    except StopIteration:
        raise PnmError("empty file") from None
    if magic == b"P5":
        channels = 1
    elif magic == b"P6":
        channels = 3
    else:
        raise PnmError(f"bad magic {magic!r}: only binary P5/P6 supported")

    fields = []
    offset = 0
    for _ in range(3):
        try:
            token, offset = next(reader)
        except StopIteration:
            raise PnmError("header ended before width/height/maxval") from None
        try:
            fields.append(int(token))
        except ValueError:
            raise PnmError(f"non-numeric header token {token!r}") from None
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise PnmError(f"bad dimensions {width}x{height}")
    if maxval != 255:
        raise PnmError(f"maxval {maxval} unsupported (must be 255)")

    start = offset + 1  # exactly one whitespace byte after maxval
    expected = width * height * channels
    raw = data[start : start + expected]
    if len(raw) != expected:
        raise PnmError(
            f"short pixel data: expected {expected} bytes, got {len(raw)}"
        )
    samples = np.frombuffer(raw, dtype=np.uint8).reshape(height, width, channels)
    return PnmImage(samples.copy())


def encode_pnm(image: PnmImage) -> bytes:
    magic = b"P5" if image.channels == 1 else b"P6"
    header = b"%s\n%d %d\n255\n" % (magic, image.width, image.height)
    return header + image.samples.tobytes()


def read_pnm(path: Union[str, bytes]) -> PnmImage:
    with open(path, "rb") as f:
        return parse_pnm(f.read())


def write_pnm(image: PnmImage, path: Union[str, bytes]) -> None:
    with open(path, "wb") as f:
        f.write(encode_pnm(image))
