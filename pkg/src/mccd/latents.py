"""Dense latent grids and the MCCDLAT1 interchange format.

A latent grid is a ``channels x height x width`` block of finite reals.
Grids are value objects: the backing array is frozen at construction and
every operation on grids returns a new one.

MCCDLAT1 layout, little-endian throughout:

    bytes  0..7    magic ``MCCDLAT1``
    bytes  8..11   u32 rank, always 3
    bytes 12..23   u32 channels, u32 height, u32 width
    bytes 24..     f32 data, row-major (channel, then row, then column)

The interchange element type is f32. In memory grids are held as f64 so
chained grid arithmetic keeps more headroom than the wire format.
"""

from __future__ import annotations

import base64
import binascii
import struct
from pathlib import Path

import numpy as np

from .errors import LatentFormatError

MAGIC = b"MCCDLAT1"

_HEADER = struct.Struct("<8sIIII")
_MAX_DIM = 65535
_MAX_ELEMENTS = 1 << 26


class LatentGrid:
    """Immutable rank-3 grid of finite floats, indexed [channel, row, column]."""

    __slots__ = ("data",)

    def __init__(self, data):
        arr = np.array(data, dtype=np.float64, copy=True)
        if arr.ndim != 3:
            raise ValueError(f"latent grid must have rank 3, got shape {arr.shape}")
        if min(arr.shape) < 1:
            raise ValueError(f"latent grid dims must all be >= 1, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("latent grid contains NaN or Inf")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    def __setattr__(self, name, value):
        raise AttributeError("LatentGrid is immutable")

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def __repr__(self) -> str:
        c, h, w = self.shape
        return f"LatentGrid(channels={c}, height={h}, width={w})"


def latent_to_bytes(grid: LatentGrid) -> bytes:
    """Serialize a grid to MCCDLAT1 bytes (f32 payload)."""
    header = _HEADER.pack(MAGIC, 3, grid.channels, grid.height, grid.width)
    return header + grid.data.astype("<f4").tobytes(order="C")


def latent_from_bytes(blob: bytes) -> LatentGrid:
    """Decode MCCDLAT1 bytes into a grid.

    Raises LatentFormatError with the byte offset of the first defect.
    """
    if len(blob) < len(MAGIC) or blob[: len(MAGIC)] != MAGIC:
        raise LatentFormatError("bad magic, expected MCCDLAT1", offset=0)
    if len(blob) < _HEADER.size:
        raise LatentFormatError("truncated header", offset=len(blob))
    _, rank, channels, height, width = _HEADER.unpack_from(blob)
    if rank != 3:
        raise LatentFormatError(f"unsupported rank {rank}, expected 3", offset=8)
    if min(channels, height, width) < 1:
        raise LatentFormatError(
            f"dims must all be >= 1, got {channels}x{height}x{width}", offset=12
        )
    if max(channels, height, width) > _MAX_DIM or channels * height * width > _MAX_ELEMENTS:
        raise LatentFormatError(
            f"unreasonable dims {channels}x{height}x{width}", offset=12
        )
    expected = 4 * channels * height * width
    actual = len(blob) - _HEADER.size
    if actual != expected:
        raise LatentFormatError(
            f"payload size mismatch: expected {expected} data bytes, got {actual}",
            offset=_HEADER.size,
        )
    arr = np.frombuffer(blob, dtype="<f4", offset=_HEADER.size)
    arr = arr.reshape(channels, height, width)
    if not np.all(np.isfinite(arr)):
        raise LatentFormatError("payload contains non-finite values", offset=_HEADER.size)
    return LatentGrid(arr)


def latent_to_b64(grid: LatentGrid) -> str:
    """Serialize a grid to the base64 wrapping used on the wire."""
    return base64.b64encode(latent_to_bytes(grid)).decode("ascii")


def latent_from_b64(text: str) -> LatentGrid:
    """Decode a base64-wrapped MCCDLAT1 payload."""
    try:
        blob = base64.b64decode(text, validate=True)
    except (binascii.Error, ValueError) as err:
        raise LatentFormatError(f"invalid base64 wrapping: {err}", offset=0) from None
    return latent_from_bytes(blob)


def write_latent(grid: LatentGrid, path: str | Path) -> None:
    Path(path).write_bytes(latent_to_bytes(grid))


def read_latent(path: str | Path) -> LatentGrid:
    return latent_from_bytes(Path(path).read_bytes())
