"""Video tensors, projection onto valid pixels, frame padding/downsampling and .vten I/O.

Pixel arrays are always stored channel-first as ``(C, N0, N1, N2)``.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

MAGIC = b"VTEN"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHHIII")
_U32_MAX = 2**32 - 1


class VideoFormatError(ValueError):
    """Raised when a .vten file cannot be decoded."""

    code = "format"


class BadMagicError(VideoFormatError):
    code = "bad magic"


class TruncatedPayloadError(VideoFormatError):
    code = "truncated payload"


class DimensionOverflowError(VideoFormatError):
    code = "dimension overflow"


class UnsupportedVersionError(VideoFormatError):
    code = "unsupported version"


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class VideoTensor:
    """Integer-pixel video; ``pixels`` is a read-only uint8 array (C, N0, N1, N2)."""

    pixels: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.pixels)
        if p.ndim == 3:
            p = p[None]
        if p.ndim != 4:
            raise ValueError(f"expected a 3-D or 4-D pixel array, got ndim={p.ndim}")
        if min(p.shape) < 1:
            raise ValueError(f"all dimensions must be >= 1, got {p.shape}")
        if p.dtype != np.uint8:
            if np.issubdtype(p.dtype, np.integer) or np.issubdtype(p.dtype, np.floating):
                if not np.all(np.isfinite(p)) or np.any(p != np.round(p)):
                    raise ValueError("pixel values must be integers")
                if p.min() < 0 or p.max() > 255:
                    raise ValueError("pixel values must lie in [0, 255]")
            else:
                raise ValueError(f"unsupported pixel dtype {p.dtype}")
        p = np.array(p, dtype=np.uint8, copy=True)
        object.__setattr__(self, "pixels", _freeze(p))

    @classmethod
    def zeros(cls, frames: int, height: int, width: int, channels: int = 1) -> "VideoTensor":
        return cls(np.zeros((channels, frames, height, width), dtype=np.uint8))

    @property
    def channels(self) -> int:
        return self.pixels.shape[0]

    @property
    def frames(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[2]

    @property
    def width(self) -> int:
        return self.pixels.shape[3]

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.pixels.shape  # type: ignore[return-value]

    def to_float(self) -> "FloatTensor":
        return FloatTensor(self.pixels.astype(np.float64))

    def __eq__(self, other):
        if not isinstance(other, VideoTensor):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.pixels, other.pixels))

    def __hash__(self):
        return hash((self.shape, self.pixels.tobytes()))

    def __repr__(self):
        c, n0, n1, n2 = self.shape
        return f"VideoTensor(C={c}, N0={n0}, N1={n1}, N2={n2})"


@dataclass(frozen=True, eq=False)
class FloatTensor:
    """Real or complex double-precision values with the same layout as VideoTensor."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim == 3:
            v = v[None]
        if v.ndim != 4 or min(v.shape) < 1:
            raise ValueError(f"invalid tensor shape {v.shape}")
        dtype = np.complex128 if np.iscomplexobj(v) else np.float64
        object.__setattr__(self, "values", _freeze(np.array(v, dtype=dtype, copy=True)))

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.values)

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.values.shape  # type: ignore[return-value]

    def __sub__(self, other: "FloatTensor") -> "FloatTensor":
        return FloatTensor(self.values - other.values)


def round_half_away(x: np.ndarray) -> np.ndarray:
    """Round to the nearest integer, ties away from zero (np.round ties to even)."""
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def project_to_valid(x: Union[FloatTensor, np.ndarray]) -> VideoTensor:
    """Map arbitrary real/complex values onto valid pixels: magnitude, round, clip."""
    values = x.values if isinstance(x, FloatTensor) else np.asarray(x)
    if np.iscomplexobj(values):
        values = np.abs(values)
    values = np.clip(round_half_away(values.astype(np.float64)), 0, 255)
    return VideoTensor(values.astype(np.uint8))


def pad_frames(v: VideoTensor, target_frames: int) -> VideoTensor:
    """Append all-zero frames until the video has ``target_frames`` frames."""
    if target_frames < v.frames:
        raise ValueError(f"cannot truncate via pad: target {target_frames} < {v.frames} frames")
    c, n0, n1, n2 = v.shape
    out = np.zeros((c, target_frames, n1, n2), dtype=np.uint8)
    out[:, :n0] = v.pixels
    return VideoTensor(out)


def downsample_indices(n_frames: int, target_frames: int) -> np.ndarray:
    if not 1 <= target_frames <= n_frames:
        raise ValueError(f"target_frames must be in [1, {n_frames}], got {target_frames}")
    return (np.arange(target_frames) * n_frames) // target_frames


def downsample_frames(v: VideoTensor, target_frames: int) -> VideoTensor:
    """Keep ``target_frames`` uniformly spaced frames, index_j = floor(j*N0/target)."""
    return VideoTensor(v.pixels[:, downsample_indices(v.frames, target_frames)])


def encode_vten(v: VideoTensor) -> bytes:
    c, n0, n1, n2 = v.shape
    if c > 0xFFFF or max(n0, n1, n2) > _U32_MAX:
        raise DimensionOverflowError(f"shape {v.shape} does not fit the header")
    return _HEADER.pack(MAGIC, FORMAT_VERSION, c, n0, n1, n2) + v.pixels.tobytes(order="C")


def decode_vten(data: bytes) -> VideoTensor:
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagicError("bad magic")
    if len(data) < _HEADER.size:
        raise TruncatedPayloadError("truncated payload: incomplete header")
    _, version, c, n0, n1, n2 = _HEADER.unpack_from(data)
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"unsupported version {version}")
    if min(c, n0, n1, n2) < 1:
        raise DimensionOverflowError(f"zero dimension in header {(c, n0, n1, n2)}")
    count = c * n0 * n1 * n2
    if count > 2**40:
        raise DimensionOverflowError(f"declared pixel count {count} is too large")
    payload = data[_HEADER.size:]
    if len(payload) < count:
        raise TruncatedPayloadError(
            f"truncated payload: expected {count} bytes, found {len(payload)}")
    if len(payload) > count:
        raise VideoFormatError(f"trailing data: expected {count} bytes, found {len(payload)}")
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(c, n0, n1, n2)
    return VideoTensor(pixels)


def write_vten(v: VideoTensor, path) -> None:
    Path(path).write_bytes(encode_vten(v))


def read_vten(path) -> VideoTensor:
    return decode_vten(Path(path).read_bytes())
