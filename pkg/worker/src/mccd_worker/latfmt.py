"""Latent wire format: MCCDLAT1 header plus row-major float32 payload.

Layout, all little-endian: 8-byte magic ``MCCDLAT1``, uint32 rank (always
3), three uint32 dims (channels, height, width), then channels*height*width
float32 values. Kept deliberately separate from any client-side codec; the
bytes on the wire are the only shared contract.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"MCCDLAT1"
_HEAD = struct.Struct("<8sI")
_DIMS = struct.Struct("<III")

# refuse absurd payloads before allocating for them
MAX_DIM = 65535
MAX_CELLS = 1 << 26


class WireFormatError(ValueError):
    """Blob does not parse as an MCCDLAT1 latent."""


def encode(latent: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(latent, dtype=np.float32)
    if arr.ndim != 3:
        raise WireFormatError(f"latent must be rank 3, got shape {arr.shape}")
    c, h, w = arr.shape
    return _HEAD.pack(MAGIC, 3) + _DIMS.pack(c, h, w) + arr.tobytes()


def decode(blob: bytes) -> np.ndarray:
    if len(blob) < _HEAD.size + _DIMS.size:
        raise WireFormatError(
            f"blob truncated at byte {len(blob)}, header needs {_HEAD.size + _DIMS.size}"
        )
    magic, rank = _HEAD.unpack_from(blob, 0)
    if magic != MAGIC:
        raise WireFormatError(f"bad magic {magic!r} at byte 0")
    if rank != 3:
        raise WireFormatError(f"unsupported rank {rank} at byte 8")
    c, h, w = _DIMS.unpack_from(blob, _HEAD.size)
    if min(c, h, w) < 1 or max(c, h, w) > MAX_DIM or c * h * w > MAX_CELLS:
        raise WireFormatError(f"unreasonable dims {(c, h, w)} at byte 12")
    expected = _HEAD.size + _DIMS.size + 4 * c * h * w
    if len(blob) != expected:
        raise WireFormatError(
            f"payload is {len(blob)} bytes, dims {(c, h, w)} need {expected}"
        )
    arr = np.frombuffer(blob, dtype="<f4", offset=_HEAD.size + _DIMS.size)
    arr = arr.reshape(c, h, w).copy()
    if not np.all(np.isfinite(arr)):
        raise WireFormatError("payload contains NaN or Inf")
    return arr
