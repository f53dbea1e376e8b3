"""Separable 3-D transforms over the (frame, row, column) axes of a video.

Every transform acts on the last three axes, so a leading channel axis is
handled independently. Four bases are provided:

* ``DFT``: un-normalized forward, ``1/(N0*N1*N2)`` on the inverse.
* ``DCT``: orthonormal DCT-II forward, DCT-III inverse.
* ``DWT``: single-level Haar (db1) with interleaved ``2k + m`` layout,
  ``m = 0`` low-pass and ``m = 1`` high-pass along each axis.
* ``RT``: basis ``b_k = sum_n e_n prod_i M_i[k_i, n_i]`` for three random
  invertible matrices.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
import scipy.fft

from .video import FloatTensor

AXES = (-3, -2, -1)


class TransformId(str, Enum):
    DFT = "DFT"
    DCT = "DCT"
    DWT = "DWT"
    RT = "RT"

    @classmethod
    def parse(cls, value) -> "TransformId":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).upper())
        except ValueError:
            raise ValueError(f"unknown transform {value!r}; expected one of "
                             f"{[t.value for t in cls]}") from None


@dataclass(frozen=True, eq=False)
class SpectralCoefficients:
    values: np.ndarray
    transform_id: TransformId

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim == 3:
            v = v[None]
        if v.ndim != 4:
            raise ValueError(f"invalid coefficient shape {v.shape}")
        tid = TransformId.parse(self.transform_id)
        dtype = np.complex128 if np.iscomplexobj(v) else np.float64
        v = np.array(v, dtype=dtype, copy=True)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "transform_id", tid)

    @property
    def shape(self):
        return self.values.shape

    def perturbed(self, index: tuple, delta: float) -> "SpectralCoefficients":
        """Copy with ``delta`` added (to the real part) at ``index`` on every channel."""
        v = self.values.copy()
        v[(slice(None),) + tuple(index)] += delta
        return SpectralCoefficients(v, self.transform_id)


def _values(x) -> np.ndarray:
    if isinstance(x, (FloatTensor, SpectralCoefficients)):
        return x.values
    v = np.asarray(x)
    return v[None] if v.ndim == 3 else v


def apply_modes(x: np.ndarray, mats: Sequence[np.ndarray]) -> np.ndarray:
    """Multiply each of the last three axes by its matrix: out[..k..] = sum_n A[k, n] x[..n..]."""
    out = x
    for axis, a in zip(AXES, mats):
        out = np.moveaxis(np.tensordot(a, out, axes=([1], [axis])), 0, axis)
    return out


# DFT ------------------------------------------------------------------------

def dft_forward(v) -> SpectralCoefficients:
    return SpectralCoefficients(np.fft.fftn(_values(v), axes=AXES), TransformId.DFT)


def dft_inverse(r) -> FloatTensor:
    return FloatTensor(np.fft.ifftn(_values(r), axes=AXES))


# DCT ------------------------------------------------------------------------

def dct_forward(v) -> SpectralCoefficients:
    x = _values(v)
    if np.iscomplexobj(x):
        out = (scipy.fft.dctn(x.real, type=2, axes=AXES, norm="ortho")
               + 1j * scipy.fft.dctn(x.imag, type=2, axes=AXES, norm="ortho"))
    else:
        out = scipy.fft.dctn(x, type=2, axes=AXES, norm="ortho")
    return SpectralCoefficients(out, TransformId.DCT)


def dct_inverse(r) -> FloatTensor:
    x = _values(r)
    if np.iscomplexobj(x):
        out = (scipy.fft.idctn(x.real, type=2, axes=AXES, norm="ortho")
               + 1j * scipy.fft.idctn(x.imag, type=2, axes=AXES, norm="ortho"))
    else:
        out = scipy.fft.idctn(x, type=2, axes=AXES, norm="ortho")
    return FloatTensor(out)


# DWT ------------------------------------------------------------------------

@lru_cache(maxsize=64)
def haar_matrix(n: int) -> np.ndarray:
    """Orthonormal single-level Haar analysis matrix in interleaved layout.

    Row ``2k + m`` holds ``(-1)**(m*l) / sqrt(2)`` at column ``2k + l``.
    """
    if n % 2:
        raise ValueError(f"even dimensions required, got {n}")
    h = np.zeros((n, n))
    s = 1.0 / np.sqrt(2.0)
    for k in range(n // 2):
        h[2 * k, 2 * k] = h[2 * k, 2 * k + 1] = s
        h[2 * k + 1, 2 * k] = s
        h[2 * k + 1, 2 * k + 1] = -s
    h.setflags(write=False)
    return h


def _check_even(shape):
    if any(n % 2 for n in shape[-3:]):
        raise ValueError(f"even dimensions required for DWT, got {tuple(shape[-3:])}")


def dwt_forward(v) -> SpectralCoefficients:
    x = _values(v)
    _check_even(x.shape)
    mats = [haar_matrix(n) for n in x.shape[-3:]]
    return SpectralCoefficients(apply_modes(x, mats), TransformId.DWT)


def dwt_inverse(r) -> FloatTensor:
    x = _values(r)
    _check_even(x.shape)
    mats = [haar_matrix(n).T for n in x.shape[-3:]]
    return FloatTensor(apply_modes(x, mats))


# RT -------------------------------------------------------------------------

DEFAULT_CONDITION_BOUND = 1e6
_MAX_RESAMPLES = 100


@dataclass(frozen=True, eq=False)
class RandomTransformSpec:
    """Three invertible mode matrices; ``M[i][k, n]`` weights pixel ``n`` in basis vector ``k``.

    Use :meth:`sample` to draw matrices with entries in [0, 1) from a seed;
    the constructor accepts explicit matrices (e.g. identities) and only
    checks invertibility.
    """

    matrices: tuple
    seed: Optional[int] = None
    condition_bound: float = DEFAULT_CONDITION_BOUND
    _inverses: tuple = field(init=False, repr=False)

    def __post_init__(self):
        mats = []
        for i, m in enumerate(self.matrices):
            m = np.array(m, dtype=np.float64, copy=True)
            if m.ndim != 2 or m.shape[0] != m.shape[1]:
                raise ValueError(f"mode matrix {i} must be square, got {m.shape}")
            cond = np.linalg.cond(m)
            if not np.isfinite(cond) or cond > self.condition_bound:
                raise ValueError(f"mode matrix {i} is not invertible within condition "
                                 f"bound {self.condition_bound:g} (cond={cond:.3g})")
            m.setflags(write=False)
            mats.append(m)
        if len(mats) != 3:
            raise ValueError("exactly three mode matrices are required")
        invs = []
        for m in mats:
            inv = np.linalg.inv(m)
            inv.setflags(write=False)
            invs.append(inv)
        object.__setattr__(self, "matrices", tuple(mats))
        object.__setattr__(self, "_inverses", tuple(invs))

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(m.shape[0] for m in self.matrices)  # type: ignore[return-value]

    @classmethod
    def sample(cls, seed: int, dims: Sequence[int],
               condition_bound: float = DEFAULT_CONDITION_BOUND) -> "RandomTransformSpec":
        return _sample_rt(int(seed), tuple(int(d) for d in dims), float(condition_bound))

    def to_json(self) -> str:
        if self.seed is None:
            raise ValueError("only seeded specs can be serialized")
        return json.dumps({"seed": self.seed, "dims": list(self.dims),
                           "condition_bound": self.condition_bound})

    @classmethod
    def from_json(cls, text: str) -> "RandomTransformSpec":
        d = json.loads(text)
        unknown = set(d) - {"seed", "dims", "condition_bound"}
        if unknown:
            raise ValueError(f"unknown keys in random transform spec: {sorted(unknown)}")
        return cls.sample(d["seed"], d["dims"],
                          d.get("condition_bound", DEFAULT_CONDITION_BOUND))

    def synthesis_matrices(self):
        """Per-mode maps taking coefficients to pixels (M transposed)."""
        return [m.T for m in self.matrices]

    def analysis_matrices(self):
        return [inv.T for inv in self._inverses]


@lru_cache(maxsize=32)
def _sample_rt(seed: int, dims: tuple, condition_bound: float) -> RandomTransformSpec:
    if len(dims) != 3 or min(dims) < 1:
        raise ValueError(f"dims must be three positive sizes, got {dims}")
    mats = []
    for mode, n in enumerate(dims):
        for attempt in range(_MAX_RESAMPLES):
            rng = np.random.default_rng([seed, mode, attempt])
            m = rng.random((n, n))
            if np.linalg.cond(m) <= condition_bound:
                mats.append(m)
                break
        else:
            raise ValueError(f"could not sample an invertible {n}x{n} matrix "
                             f"under condition bound {condition_bound:g}")
    return RandomTransformSpec(tuple(mats), seed=seed, condition_bound=condition_bound)


def _check_rt_dims(x: np.ndarray, spec: RandomTransformSpec):
    if tuple(x.shape[-3:]) != spec.dims:
        raise ValueError(f"random transform dims {spec.dims} do not match "
                         f"tensor dims {tuple(x.shape[-3:])}")


def rt_forward(v, spec: RandomTransformSpec) -> SpectralCoefficients:
    x = _values(v)
    _check_rt_dims(x, spec)
    return SpectralCoefficients(apply_modes(x, spec.analysis_matrices()), TransformId.RT)


def rt_inverse(r, spec: RandomTransformSpec) -> FloatTensor:
    x = _values(r)
    _check_rt_dims(x, spec)
    return FloatTensor(apply_modes(x, spec.synthesis_matrices()))


# Dispatch -------------------------------------------------------------------

def forward(transform, v, rt_spec: Optional[RandomTransformSpec] = None) -> SpectralCoefficients:
    tid = TransformId.parse(transform)
    if tid is TransformId.DFT:
        return dft_forward(v)
    if tid is TransformId.DCT:
        return dct_forward(v)
    if tid is TransformId.DWT:
        return dwt_forward(v)
    if rt_spec is None:
        raise ValueError("RT requires a RandomTransformSpec")
    return rt_forward(v, rt_spec)


def inverse(r: SpectralCoefficients, rt_spec: Optional[RandomTransformSpec] = None) -> FloatTensor:
    tid = r.transform_id
    if tid is TransformId.DFT:
        return dft_inverse(r)
    if tid is TransformId.DCT:
        return dct_inverse(r)
    if tid is TransformId.DWT:
        return dwt_inverse(r)
    if rt_spec is None:
        raise ValueError("RT requires a RandomTransformSpec")
    return rt_inverse(r, rt_spec)
