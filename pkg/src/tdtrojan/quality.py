"""PSNR / SSIM and their localized sliding-window statistics."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from scipy.signal import correlate2d

from .video import VideoTensor

PSNR_SATURATION = 99.0
PEAK = 255.0
SSIM_K1, SSIM_K2 = 0.01, 0.03
SSIM_WINDOW, SSIM_SIGMA = 11, 1.5


def _pair(a: VideoTensor, b: VideoTensor):
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a.pixels.astype(np.float64), b.pixels.astype(np.float64)


def psnr_from_mse(mse: float) -> float:
    if mse <= 0:
        return PSNR_SATURATION
    return float(10.0 * np.log10(PEAK**2 / mse))


def psnr(a: VideoTensor, b: VideoTensor) -> float:
    x, y = _pair(a, b)
    return psnr_from_mse(float(np.mean((x - y) ** 2)))


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    ax = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(ax**2) / (2 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


def ssim_map(x: np.ndarray, y: np.ndarray, window: np.ndarray) -> np.ndarray:
    """SSIM at every valid window position of two 2-D frames."""
    c1 = (SSIM_K1 * PEAK) ** 2
    c2 = (SSIM_K2 * PEAK) ** 2

    def filt(z):
        return correlate2d(z, window, mode="valid")

    mx, my = filt(x), filt(y)
    sxx = filt(x * x) - mx * mx
    syy = filt(y * y) - my * my
    sxy = filt(x * y) - mx * my
    return ((2 * mx * my + c1) * (2 * sxy + c2)) / ((mx**2 + my**2 + c1) * (sxx + syy + c2))


def frame_ssim(x: np.ndarray, y: np.ndarray) -> float:
    # frames smaller than the window use a window clipped to the frame
    size = min(SSIM_WINDOW, x.shape[0], x.shape[1])
    return float(ssim_map(x, y, gaussian_window(size)).mean())


def ssim(a: VideoTensor, b: VideoTensor) -> float:
    """Mean SSIM over every frame of every channel."""
    x, y = _pair(a, b)
    c, n0 = x.shape[:2]
    return float(np.mean([frame_ssim(x[i, t], y[i, t]) for i in range(c) for t in range(n0)]))


@dataclass
class WindowStats:
    min: float
    max: float
    mean: float
    std: float

    @classmethod
    def of(cls, values: np.ndarray) -> "WindowStats":
        v = np.asarray(values, dtype=np.float64)
        return cls(float(v.min()), float(v.max()), float(v.mean()), float(v.std()))


@dataclass
class QualityReport:
    psnr: float
    ssim: float
    local_psnr: WindowStats
    local_ssim: WindowStats
    local_mse: WindowStats
    window_size: int
    stride: int
    n_windows: int

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric", "min", "max", "mean", "std"])
        for name, st in (("PSNR", self.local_psnr), ("SSIM", self.local_ssim)):
            w.writerow([name, f"{st.min:.6f}", f"{st.max:.6f}", f"{st.mean:.6f}", f"{st.std:.6f}"])
        return buf.getvalue()


def window_origins(length: int, window: int, stride: int) -> list:
    """Window start offsets along one axis; a final end-aligned window covers any remainder."""
    if length <= window:
        return [0]
    starts = list(range(0, length - window + 1, stride))
    if starts[-1] != length - window:
        starts.append(length - window)
    return starts


def _window_values(x: np.ndarray, y: np.ndarray, window: int, stride: int):
    """Per-position (mse, psnr, ssim) averaged over channels and frames; arrays of shape (P,)."""
    h, w = x.shape[-2:]
    wh, ww = min(window, h), min(window, w)
    rows, cols = window_origins(h, window, stride), window_origins(w, window, stride)
    mse, ps, ss = [], [], []
    for r in rows:
        for c in cols:
            xs = x[..., r:r + wh, c:c + ww].reshape(-1, wh, ww)
            ys = y[..., r:r + wh, c:c + ww].reshape(-1, wh, ww)
            per_mse = np.mean((xs - ys) ** 2, axis=(1, 2))
            mse.append(per_mse.mean())
            ps.append(np.mean([psnr_from_mse(m) for m in per_mse]))
            ss.append(np.mean([frame_ssim(a, b) for a, b in zip(xs, ys)]))
    return np.array(mse), np.array(ps), np.array(ss)


def localized_quality(pairs: Sequence, window: int = 28, stride: int = 14,
                      per_video_stats: bool = False) -> QualityReport:
    """Sliding-window PSNR/SSIM statistics over one or more (clean, triggered) pairs.

    By default each window position is averaged across all frames and pairs
    before min/max/mean/std are taken over positions. With
    ``per_video_stats`` the statistics are computed per pair and then averaged.
    """
    if isinstance(pairs, tuple) and len(pairs) == 2 and isinstance(pairs[0], VideoTensor):
        pairs = [pairs]
    pairs = list(pairs)
    if not pairs:
        raise ValueError("at least one video pair is required")
    if window < 1 or stride < 1:
        raise ValueError("window and stride must be >= 1")
    per_pair = []
    for a, b in pairs:
        x, y = _pair(a, b)
        per_pair.append(_window_values(x, y, window, stride))
    g_psnr = float(np.mean([psnr(a, b) for a, b in pairs]))
    g_ssim = float(np.mean([ssim(a, b) for a, b in pairs]))
    if per_video_stats:
        stats = []
        for k in range(3):
            each = [WindowStats.of(v[k]) for v in per_pair]
            stats.append(WindowStats(*(float(np.mean([getattr(s, f) for s in each]))
                                       for f in ("min", "max", "mean", "std"))))
        mse_st, psnr_st, ssim_st = stats
    else:
        mse_st, psnr_st, ssim_st = (
            WindowStats.of(np.mean([v[k] for v in per_pair], axis=0)) for k in range(3))
    return QualityReport(g_psnr, g_ssim, psnr_st, ssim_st, mse_st, window, stride,
                         len(per_pair[0][0]))
