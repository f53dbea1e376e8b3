"""Transform-domain trigger embedding.

A trigger perturbs a block of coefficients ``band x X x Y`` of a video's
transformed representation by ``delta``, inverts the transform and projects
the result back onto valid pixels. Because every basis vector of the
supported transforms spans many frames, the pixel-space residual is spread
over the whole clip rather than stamped onto individual frames.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import transforms as T
from .transforms import RandomTransformSpec, TransformId
from .video import FloatTensor, VideoTensor, project_to_valid


def sample_spatial_sets(seed: int, size: int, n1: int, n2: int):
    """Draw ``size`` distinct row indices from [n1] and column indices from [n2]."""
    if size < 1:
        raise ValueError(f"set size must be >= 1, got {size}")
    if size > min(n1, n2):
        raise ValueError(f"set size {size} exceeds axis length min({n1}, {n2})")
    rng = np.random.default_rng(seed)
    x = np.sort(rng.choice(n1, size=size, replace=False))
    y = np.sort(rng.choice(n2, size=size, replace=False))
    return tuple(int(i) for i in x), tuple(int(i) for i in y)


@dataclass(frozen=True)
class TriggerSpec:
    """Parameters of one trigger: transform, temporal band, spatial sets and magnitude.

    ``x``/``y`` may be given explicitly; otherwise they are drawn once from
    ``seed`` with ``set_size`` elements, or cover the whole axis when
    ``set_size`` is None.
    """

    transform: TransformId
    k0: int
    band_len: int
    delta: float
    set_size: Optional[int] = None
    x: Optional[tuple] = None
    y: Optional[tuple] = None
    seed: int = 0
    rt_seed: Optional[int] = None
    rt_condition_bound: float = T.DEFAULT_CONDITION_BOUND

    def __post_init__(self):
        object.__setattr__(self, "transform", TransformId.parse(self.transform))
        if self.delta < 0 or not np.isfinite(self.delta):
            raise ValueError(f"delta must be a finite value >= 0, got {self.delta}")
        if self.band_len < 1:
            raise ValueError("temporal band must be non-empty")
        if self.k0 < 0:
            raise ValueError(f"k0 must be >= 0, got {self.k0}")
        if (self.x is None) != (self.y is None):
            raise ValueError("x and y must be given together")
        if self.x is not None:
            if len(self.x) < 1 or len(self.y) < 1:
                raise ValueError("spatial sets must be non-empty")
            object.__setattr__(self, "x", tuple(int(i) for i in self.x))
            object.__setattr__(self, "y", tuple(int(i) for i in self.y))
        if self.set_size is not None and self.set_size < 1:
            raise ValueError(f"set_size must be >= 1, got {self.set_size}")

    @property
    def band(self) -> range:
        return range(self.k0, self.k0 + self.band_len)

    def spatial_sets(self, n1: int, n2: int):
        if self.x is not None:
            return self.x, self.y
        if self.set_size is None:
            return tuple(range(n1)), tuple(range(n2))
        return sample_spatial_sets(self.seed, self.set_size, n1, n2)

    def rt_spec(self, dims) -> Optional[RandomTransformSpec]:
        if self.transform is not TransformId.RT:
            return None
        seed = self.seed if self.rt_seed is None else self.rt_seed
        return RandomTransformSpec.sample(seed, dims, self.rt_condition_bound)

    def index(self, shape):
        """Open-mesh index for the perturbed block on a grid of shape (N0, N1, N2)."""
        n0, n1, n2 = shape[-3:]
        band = np.asarray(self.band)
        if self.transform is TransformId.DFT:
            # DFT frequencies are periodic in N0
            if self.band_len > n0:
                raise IndexError(f"band length {self.band_len} exceeds {n0} frames")
            band = band % n0
        xs, ys = self.spatial_sets(n1, n2)
        xs, ys = np.asarray(xs), np.asarray(ys)
        for name, idx, n in (("temporal band", band, n0), ("X", xs, n1), ("Y", ys, n2)):
            if idx.min() < 0 or idx.max() >= n:
                raise IndexError(f"{name} indices {idx.min()}..{idx.max()} out of range "
                                 f"for axis length {n}")
        if len(set(xs.tolist())) != len(xs) or len(set(ys.tolist())) != len(ys):
            raise ValueError("spatial sets must not contain duplicates")
        return np.ix_(band, xs, ys)

    def with_k0(self, k0: int) -> "TriggerSpec":
        return replace(self, k0=k0)

    def to_dict(self) -> dict:
        d = {"transform": self.transform.value, "k0": self.k0, "band_len": self.band_len,
             "delta": self.delta, "seed": self.seed}
        if self.x is not None:
            d["x"], d["y"] = list(self.x), list(self.y)
        else:
            d["set_size"] = self.set_size
        if self.transform is TransformId.RT:
            d["rt_seed"] = self.rt_seed
            d["rt_condition_bound"] = self.rt_condition_bound
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TriggerSpec":
        allowed = {"transform", "k0", "band_len", "delta", "set_size", "x", "y", "seed",
                   "rt_seed", "rt_condition_bound"}
        unknown = set(d) - allowed
        if unknown:
            raise ValueError(f"unknown trigger spec keys: {sorted(unknown)}")
        missing = {"transform", "k0", "band_len", "delta"} - set(d)
        if missing:
            raise ValueError(f"missing trigger spec keys: {sorted(missing)}")
        kw = dict(d)
        for key in ("x", "y"):
            if kw.get(key) is not None:
                kw[key] = tuple(kw[key])
        kw["delta"] = float(kw["delta"])
        return cls(**kw)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "TriggerSpec":
        return cls.from_dict(json.loads(text))


# Full-scale values target 32x224x224 clips; the desk presets target 16x32x32.
PRESETS = {
    "dft-full": TriggerSpec(TransformId.DFT, k0=35, band_len=10, set_size=25, delta=50_000.0),
    "dct-full": TriggerSpec(TransformId.DCT, k0=35, band_len=10, set_size=25, delta=50.0),
    "dwt-full": TriggerSpec(TransformId.DWT, k0=12, band_len=10, set_size=None, delta=10.0),
    "rt-full": TriggerSpec(TransformId.RT, k0=35, band_len=10, set_size=25, delta=30.0),
    "dft-desk": TriggerSpec(TransformId.DFT, k0=4, band_len=5, set_size=8, delta=3_000.0),
}


def preset(name: str) -> TriggerSpec:
    try:
        return PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; available: {sorted(PRESETS)}") from None


def embed_trigger(v: VideoTensor, spec: TriggerSpec) -> VideoTensor:
    """Perturb the coefficient block of ``spec`` on every channel and project back."""
    dims = v.shape[1:]
    idx = spec.index(dims)
    rt = spec.rt_spec(dims)
    coeffs = T.forward(spec.transform, v.to_float(), rt)
    return project_to_valid(T.inverse(coeffs.perturbed(idx, spec.delta), rt))


def trigger_residual(v: VideoTensor, spec: TriggerSpec) -> FloatTensor:
    """Signed pixel difference ``embed_trigger(v) - v``."""
    return FloatTensor(embed_trigger(v, spec).pixels.astype(np.float64)
                       - v.pixels.astype(np.float64))
