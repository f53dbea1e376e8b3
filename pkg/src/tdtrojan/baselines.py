"""Frame-wise baseline triggers: BadNet, Blend, SIG and FTtrojan.

Each one stamps the same pattern onto every frame independently, which is
what makes them visible to per-frame defenses.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
import scipy.fft
from scipy.ndimage import gaussian_filter

from .video import VideoTensor, project_to_valid, read_vten

VARIANTS = ("BadNet", "Blend", "SIG", "FTtrojan")


def default_blend_pattern(height: int, width: int, channels: int = 1, seed: int = 0) -> np.ndarray:
    """Seeded smooth noise image, shape (channels, height, width), values in [0, 255]."""
    rng = np.random.default_rng(seed)
    noise = rng.random((channels, height, width))
    sigma = max(1.0, min(height, width) / 16)
    smooth = gaussian_filter(noise, sigma=(0, sigma, sigma), mode="wrap")
    lo, hi = smooth.min(), smooth.max()
    if hi > lo:
        smooth = (smooth - lo) / (hi - lo)
    return np.rint(smooth * 255).astype(np.uint8)


@dataclass(frozen=True)
class BaselineSpec:
    variant: str
    square_size: int = 21
    alpha: float = 0.15
    pattern: Optional[np.ndarray] = field(default=None, compare=False, repr=False)
    pattern_path: Optional[str] = None
    pattern_seed: int = 0
    sig_delta: float = 20.0
    sig_freq: float = 6.0
    ft_magnitude: float = 30.0
    ft_freqs: tuple = (15, 31)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown baseline {self.variant!r}; expected one of {VARIANTS}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.square_size < 1:
            raise ValueError("square_size must be >= 1")
        object.__setattr__(self, "ft_freqs", tuple(int(f) for f in self.ft_freqs))

    def check_frame(self, n1: int, n2: int) -> None:
        if self.variant == "BadNet" and self.square_size > min(n1, n2):
            raise ValueError(f"square size {self.square_size} exceeds frame {n1}x{n2}")
        if self.variant == "FTtrojan" and max(self.ft_freqs) >= min(n1, n2):
            raise ValueError(f"frequencies {self.ft_freqs} must be < min({n1}, {n2})")

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("pattern")
        d["ft_freqs"] = list(self.ft_freqs)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "BaselineSpec":
        allowed = {f for f in cls.__dataclass_fields__ if f != "pattern"}
        unknown = set(d) - allowed
        if unknown:
            raise ValueError(f"unknown baseline spec keys: {sorted(unknown)}")
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def proportional_square(frame_size: int, full_square: int = 21, full_frame: int = 224) -> int:
    """BadNet square scaled to keep the same fraction of the frame side."""
    return max(1, round(full_square * frame_size / full_frame))


def embed_badnet(v: VideoTensor, spec: BaselineSpec) -> VideoTensor:
    """White ``s x s`` square in the top-right corner of every frame."""
    spec.check_frame(v.height, v.width)
    s = spec.square_size
    out = v.pixels.copy()
    out[:, :, :s, v.width - s:] = 255
    return VideoTensor(out)


def _pattern(v: VideoTensor, spec: BaselineSpec) -> np.ndarray:
    if spec.pattern is not None:
        p = np.asarray(spec.pattern)
    elif spec.pattern_path is not None:
        pv = read_vten(spec.pattern_path)
        if pv.frames != 1:
            raise ValueError("blend pattern file must hold exactly one frame")
        p = pv.pixels[:, 0]
    else:
        p = default_blend_pattern(v.height, v.width, v.channels, spec.pattern_seed)
    if p.ndim == 2:
        p = p[None]
    if p.shape[1:] != (v.height, v.width) or p.shape[0] not in (1, v.channels):
        raise ValueError(f"pattern shape {p.shape} does not match frame "
                         f"({v.channels}, {v.height}, {v.width})")
    return p.astype(np.float64)


def embed_blend(v: VideoTensor, spec: BaselineSpec) -> VideoTensor:
    """Each frame becomes round((1 - alpha) * frame + alpha * pattern)."""
    p = _pattern(v, spec)[:, None]
    a = spec.alpha
    return project_to_valid((1.0 - a) * v.pixels + a * p)


def sig_pattern(width: int, delta: float, freq: float) -> np.ndarray:
    j = np.arange(width)
    return delta * np.sin(2 * np.pi * j * freq / width)


def embed_sig(v: VideoTensor, spec: BaselineSpec) -> VideoTensor:
    """Add a sinusoid that varies along columns to every frame."""
    return project_to_valid(v.pixels + sig_pattern(v.width, spec.sig_delta, spec.sig_freq))


def embed_fttrojan(v: VideoTensor, spec: BaselineSpec) -> VideoTensor:
    """Per-frame 2-D orthonormal DCT, bump the diagonal coefficients (f, f), invert."""
    spec.check_frame(v.height, v.width)
    coeffs = scipy.fft.dctn(v.pixels.astype(np.float64), type=2, axes=(-2, -1), norm="ortho")
    for f in spec.ft_freqs:
        coeffs[..., f, f] += spec.ft_magnitude
    return project_to_valid(scipy.fft.idctn(coeffs, type=2, axes=(-2, -1), norm="ortho"))


_EMBEDDERS = {
    "BadNet": embed_badnet,
    "Blend": embed_blend,
    "SIG": embed_sig,
    "FTtrojan": embed_fttrojan,
}


def embed_baseline(v: VideoTensor, spec: BaselineSpec) -> VideoTensor:
    return _EMBEDDERS[spec.variant](v, spec)
