"""Detection statistics: MAD anomaly index, STRIP entropy, activation clustering."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from scipy.special import entr
from sklearn.cluster import KMeans
from sklearn.metrics import silhouette_score

from .video import VideoTensor, project_to_valid


def modified_z_scores(values: Sequence[float]) -> np.ndarray:
    """|x - median| / MAD; every score is 0 when MAD is 0."""
    x = np.asarray(values, dtype=np.float64)
    if x.ndim != 1 or x.size < 2:
        raise ValueError("at least two values are required")
    dev = np.abs(x - np.median(x))
    mad = np.median(dev)
    if mad == 0:
        return np.zeros_like(dev)
    return dev / mad


@dataclass
class AnomalyReport:
    values: list
    z_scores: list
    flagged: list
    threshold: float = 2.0

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    def table(self) -> str:
        lines = [f"{'class':>5}  {'statistic':>12}  {'anomaly index':>13}  flagged"]
        for c, (v, z) in enumerate(zip(self.values, self.z_scores)):
            lines.append(f"{c:>5}  {v:>12.4f}  {z:>13.4f}  {'*' if c in self.flagged else ''}")
        return "\n".join(lines)


def anomaly_report(values: Sequence[float], threshold: float = 2.0) -> AnomalyReport:
    z = modified_z_scores(values)
    flagged = [int(i) for i in np.flatnonzero(z > threshold)]
    return AnomalyReport([float(v) for v in values], [float(s) for s in z], flagged, threshold)


@dataclass(frozen=True)
class StripConfig:
    blend_count: int = 100
    blend_alpha: float = 0.5
    target_fpr: float = 0.15
    seed: int = 0

    def __post_init__(self):
        if self.blend_count < 1:
            raise ValueError("blend_count must be >= 1")
        if not 0.0 < self.target_fpr < 1.0:
            raise ValueError("target_fpr must lie in (0, 1)")


def posterior_entropy(probs: np.ndarray) -> np.ndarray:
    """Shannon entropy (nats) of each row."""
    return entr(np.asarray(probs, dtype=np.float64)).sum(axis=-1)


def strip_blends(x: VideoTensor, pool: Sequence[VideoTensor], config: StripConfig) -> list:
    rng = np.random.default_rng(config.seed)
    picks = rng.integers(0, len(pool), size=config.blend_count)
    a = config.blend_alpha
    return [project_to_valid(a * x.pixels + (1 - a) * pool[int(i)].pixels) for i in picks]


def strip_entropy(model, x: VideoTensor, clean_pool: Sequence[VideoTensor],
                  config: StripConfig = StripConfig()) -> float:
    """Mean posterior entropy of ``x`` superimposed with seeded draws from ``clean_pool``.

    ``model`` needs a ``predict_proba(videos) -> (n, classes)`` method.
    """
    if not clean_pool:
        raise ValueError("clean pool is empty")
    probs = model.predict_proba(strip_blends(x, clean_pool, config))
    return float(posterior_entropy(probs).mean())


def calibrate_threshold(clean_entropies: Sequence[float], target_fpr: float) -> float:
    """k-th smallest clean entropy with k = max(1, ceil(fpr * n)); flag when entropy < threshold.

    Strict comparison flags k - 1 clean samples (for distinct entropies), so the
    achieved false-positive rate lies in [fpr - 1/n, fpr].
    """
    e = np.sort(np.asarray(clean_entropies, dtype=np.float64))
    if e.size == 0:
        raise ValueError("no clean entropies to calibrate on")
    k = max(1, int(np.ceil(target_fpr * e.size - 1e-9)))
    return float(e[k - 1])


def strip_calibrate(model, clean_set: Sequence[VideoTensor], config: StripConfig = StripConfig(),
                    clean_pool: Sequence[VideoTensor] = None) -> float:
    pool = clean_set if clean_pool is None else clean_pool
    ent = [strip_entropy(model, x, pool, config) for x in clean_set]
    return calibrate_threshold(ent, config.target_fpr)


def strip_flags(entropies: Sequence[float], threshold: float) -> np.ndarray:
    return np.asarray(entropies) < threshold


@dataclass
class ACResult:
    flagged: list
    silhouette: float
    cluster_sizes: tuple
    threshold: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


def ac_detect(activations: np.ndarray, threshold: float = 0.1, seed: int = 0,
              n_init: int = 10) -> ACResult:
    """2-means on one class's activations; flag the smaller cluster if silhouette > threshold."""
    a = np.asarray(activations, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] < 4:
        raise ValueError("need at least 4 activation vectors of equal length")
    if np.all(a == a[0]):
        return ACResult([], 0.0, (a.shape[0], 0), threshold)
    km = KMeans(n_clusters=2, n_init=n_init, random_state=seed).fit(a)
    labels = km.labels_
    sizes = (int(np.sum(labels == 0)), int(np.sum(labels == 1)))
    if min(sizes) == 0:
        return ACResult([], 0.0, sizes, threshold)
    score = float(silhouette_score(a, labels))
    flagged = []
    if score > threshold and sizes[0] != sizes[1]:
        small = int(np.argmin(sizes))
        flagged = [int(i) for i in np.flatnonzero(labels == small)]
    return ACResult(flagged, score, sizes, threshold)
