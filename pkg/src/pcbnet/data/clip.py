"""Grayscale clips and the ``PCB1`` clip file format.

Layout (little-endian)::

    offset  size  field
    0       4     magic b"PCB1"
    4       4     u32 depth
    8       4     u32 height
    12      4     u32 width
    16      1     u8 dtype (0 = float32)
    17      ...   depth*height*width float32 values, (d, h, w) row-major
"""

import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from ..errors import FormatError, ValidationError

MAGIC = b"PCB1"
_HEADER = struct.Struct("<4sIIIB")
HEADER_SIZE = _HEADER.size
_DTYPES = {0: np.dtype("<f4")}

NORMAL = 0
SUSPICIOUS = 1


@dataclass(frozen=True, eq=False)
class Clip:
    """A (depth, height, width) grayscale volume in [0, 1] with its label."""

    frames: np.ndarray
    label: int
    source_id: str
    flipped: bool = False

    def __post_init__(self):
        if self.label not in (NORMAL, SUSPICIOUS):
            raise ValidationError(f"label must be 0 or 1, got {self.label!r}")
        if self.frames.ndim != 3:
            raise ValidationError(f"clip frames must be (depth, height, width), got {self.frames.shape}")

    @property
    def depth(self):
        return self.frames.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Clip):
            return NotImplemented
        return (
            self.label == other.label
            and self.source_id == other.source_id
            and self.flipped == other.flipped
            and self.frames.dtype == other.frames.dtype
            and np.array_equal(self.frames, other.frames)
        )

    def with_frames(self, frames):
        return replace(self, frames=frames)


def encode_clip(frames) -> bytes:
    frames = np.asarray(frames)
    if frames.ndim != 3:
        raise ValidationError(f"expected (depth, height, width), got shape {frames.shape}")
    d, h, w = frames.shape
    payload = np.ascontiguousarray(frames, dtype="<f4").tobytes()
    return _HEADER.pack(MAGIC, d, h, w, 0) + payload


def decode_clip(buf: bytes) -> np.ndarray:
    if len(buf) < 4:
        raise FormatError("truncated magic", len(buf))
    if buf[:4] != MAGIC:
        raise FormatError(f"bad magic {bytes(buf[:4])!r}, expected {MAGIC!r}", 0)
    if len(buf) < HEADER_SIZE:
        raise FormatError("truncated header", len(buf))
    _, d, h, w, code = _HEADER.unpack_from(buf)
    if code not in _DTYPES:
        raise FormatError(f"unknown dtype code {code}", 16)
    if min(d, h, w) == 0:
        raise FormatError(f"zero extent in header dims {(d, h, w)}", 4)
    dtype = _DTYPES[code]
    expected = HEADER_SIZE + d * h * w * dtype.itemsize
    if len(buf) < expected:
        raise FormatError(f"payload truncated: header dims {(d, h, w)} need {expected} bytes, file has {len(buf)}",
                          len(buf))
    if len(buf) > expected:
        raise FormatError(f"{len(buf) - expected} trailing bytes after payload for dims {(d, h, w)}", expected)
    return np.frombuffer(buf, dtype=dtype, offset=HEADER_SIZE).reshape(d, h, w).astype(np.float32)


def write_clip(path, frames):
    Path(path).write_bytes(encode_clip(frames))


def read_clip(path) -> np.ndarray:
    return decode_clip(Path(path).read_bytes())
