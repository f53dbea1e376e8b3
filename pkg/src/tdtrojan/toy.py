"""Synthetic video corpus and a small numpy classifier used as the backdoor victim."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .poison import DatasetManifest, Record
from .video import VideoTensor, downsample_frames, project_to_valid, write_vten

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SyntheticCorpusSpec:
    class_count: int = 8
    train_per_class: int = 120
    test_per_class: int = 30
    frames: int = 16
    height: int = 32
    width: int = 32
    channels: int = 1
    noise_std: float = 12.0
    seed: int = 0
    background: float = 40.0
    amplitude: float = 140.0
    blob_sigma: float = 4.0
    jitter: float = 2.0

    def __post_init__(self):
        if self.class_count < 1 or self.train_per_class < 1 or self.test_per_class < 0:
            raise ValueError("class_count and train_per_class must be >= 1")
        if min(self.frames, self.height, self.width, self.channels) < 1:
            raise ValueError("video dimensions must be >= 1")


def class_pattern(spec: SyntheticCorpusSpec, c: int, offset=(0.0, 0.0), gain: float = 1.0):
    """Float video (N0, N1, N2) of class ``c``: a textured blob moving along a class direction."""
    n0, n1, n2 = spec.frames, spec.height, spec.width
    theta = 2 * np.pi * c / spec.class_count
    speed = 0.8 * min(n1, n2) / max(n0, 1) * (0.6 + 0.4 * (c % 2))
    freq = 1 + (c % 3)
    t = np.arange(n0) - (n0 - 1) / 2
    cy = (n1 - 1) / 2 + offset[0] + speed * np.sin(theta) * t
    cx = (n2 - 1) / 2 + offset[1] + speed * np.cos(theta) * t
    yy, xx = np.mgrid[0:n1, 0:n2].astype(np.float64)
    d2 = (yy[None] - cy[:, None, None]) ** 2 + (xx[None] - cx[:, None, None]) ** 2
    blob = np.exp(-d2 / (2 * spec.blob_sigma**2))
    phase = 2 * np.pi * freq * (xx * np.cos(theta) + yy * np.sin(theta)) / min(n1, n2)
    texture = 0.65 + 0.35 * np.cos(phase)
    return spec.background + gain * spec.amplitude * blob * texture[None]


def synth_video(spec: SyntheticCorpusSpec, c: int, rng: np.random.Generator) -> VideoTensor:
    offset = rng.uniform(-spec.jitter, spec.jitter, size=2)
    gain = rng.uniform(0.85, 1.15)
    base = class_pattern(spec, c, offset, gain)
    shape = (spec.channels, spec.frames, spec.height, spec.width)
    return project_to_valid(base[None] + rng.normal(0.0, spec.noise_std, size=shape))


def generate_corpus(spec: SyntheticCorpusSpec, out_dir):
    """Write train/ and test/ videos plus ``train.jsonl``/``test.jsonl``; returns both manifests."""
    out_dir = Path(out_dir)
    manifests = []
    for split, per_class, sub in (("train", spec.train_per_class, 0),
                                  ("test", spec.test_per_class, 1)):
        d = out_dir / split
        d.mkdir(parents=True, exist_ok=True)
        records = []
        for c in range(spec.class_count):
            rng = np.random.default_rng([spec.seed, sub, c])
            for i in range(per_class):
                v = synth_video(spec, c, rng)
                name = f"{split}/c{c:03d}_{i:05d}.vten"
                write_vten(v, out_dir / name)
                records.append(Record(name, c))
        m = DatasetManifest(records, spec.class_count, None, spec.seed, None, root=out_dir)
        m.save(out_dir / f"{split}.jsonl")
        manifests.append(m)
    return manifests[0], manifests[1]


def load_arrays(manifest: DatasetManifest, frames: Optional[int] = None):
    """Stack a manifest's videos into (n, C, N0, N1, N2) uint8 plus labels.

    Longer clips are downsampled to ``frames`` (default: the shortest clip).
    """
    if len(manifest) == 0:
        raise ValueError("empty manifest")
    videos = [manifest.load(r) for r in manifest.records]
    if frames is None:
        frames = min(v.frames for v in videos)
    videos = [v if v.frames == frames else downsample_frames(v, frames) for v in videos]
    return np.stack([v.pixels for v in videos]), manifest.labels()


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


class ToyModel:
    """flatten -> affine -> ReLU -> affine -> softmax; pixels are scaled to [0, 1]."""

    PARAMS = ("W1", "b1", "W2", "b2")

    def __init__(self, input_shape: Sequence[int], n_classes: int, hidden: int = 64,
                 seed: int = 0, params: Optional[dict] = None):
        self.input_shape = tuple(int(s) for s in input_shape)
        self.n_classes = int(n_classes)
        self.hidden = int(hidden)
        self.seed = seed
        d = int(np.prod(self.input_shape))
        if params is None:
            rng = np.random.default_rng(seed)
            params = {
                "W1": rng.normal(0.0, np.sqrt(2.0 / d), size=(d, self.hidden)),
                "b1": np.zeros(self.hidden),
                "W2": rng.normal(0.0, np.sqrt(2.0 / self.hidden), size=(self.hidden, self.n_classes)),
                "b2": np.zeros(self.n_classes),
            }
        self.params = {k: np.array(params[k], dtype=np.float64) for k in self.PARAMS}

    @property
    def frames(self) -> int:
        return self.input_shape[1]

    def copy(self) -> "ToyModel":
        return ToyModel(self.input_shape, self.n_classes, self.hidden, self.seed,
                        {k: v.copy() for k, v in self.params.items()})

    def _inputs(self, x) -> np.ndarray:
        if isinstance(x, VideoTensor):
            x = x.pixels[None]
        elif isinstance(x, (list, tuple)):
            x = np.stack([v.pixels if isinstance(v, VideoTensor) else v for v in x])
        x = np.asarray(x)
        if x.shape[1:] != self.input_shape:
            raise ValueError(f"expected inputs of shape {self.input_shape}, got {x.shape[1:]}")
        return x.reshape(len(x), -1).astype(np.float64) / 255.0

    def _forward(self, x: np.ndarray):
        p = self.params
        pre = x @ p["W1"] + p["b1"]
        h = np.maximum(pre, 0.0)
        return pre, h, softmax(h @ p["W2"] + p["b2"])

    def predict_proba(self, videos) -> np.ndarray:
        return self._forward(self._inputs(videos))[2]

    def predict(self, videos) -> np.ndarray:
        return np.argmax(self.predict_proba(videos), axis=1)

    def activations(self, videos) -> np.ndarray:
        """Penultimate (post-ReLU hidden) activations."""
        return self._forward(self._inputs(videos))[1]

    def loss(self, videos, labels) -> float:
        probs = self.predict_proba(videos)
        y = np.asarray(labels)
        return float(-np.mean(np.log(np.clip(probs[np.arange(len(y)), y], 1e-300, None))))

    def loss_and_grads(self, x: np.ndarray, y: np.ndarray):
        """Mean cross-entropy on flattened, scaled inputs and its gradient per parameter."""
        p = self.params
        pre, h, probs = self._forward(x)
        n = len(y)
        loss = -np.mean(np.log(np.clip(probs[np.arange(n), y], 1e-300, None)))
        dz = probs.copy()
        dz[np.arange(n), y] -= 1.0
        dz /= n
        grads = {"W2": h.T @ dz, "b2": dz.sum(axis=0)}
        dh = (dz @ p["W2"].T) * (pre > 0)
        grads["W1"] = x.T @ dh
        grads["b1"] = dh.sum(axis=0)
        return float(loss), grads

    def save(self, path) -> None:
        np.savez(path, input_shape=np.array(self.input_shape), n_classes=self.n_classes,
                 hidden=self.hidden, seed=-1 if self.seed is None else self.seed, **self.params)

    @classmethod
    def load(cls, path) -> "ToyModel":
        with np.load(path) as z:
            return cls(tuple(z["input_shape"]), int(z["n_classes"]), int(z["hidden"]),
                       int(z["seed"]), {k: z[k] for k in cls.PARAMS})


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 80
    batch_size: int = 32
    learning_rate: float = 0.02
    seed: int = 0
    hidden: int = 64

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.learning_rate <= 0 or self.hidden < 1:
            raise ValueError("training hyperparameters must be positive")


class DivergenceError(RuntimeError):
    pass


@dataclass
class TrainResult:
    model: ToyModel
    losses: list = field(default_factory=list)

    def loss_csv(self) -> str:
        lines = ["epoch,loss"] + [f"{i},{l:.10g}" for i, l in enumerate(self.losses)]
        return "\n".join(lines) + "\n"


def train_arrays(model: ToyModel, x: np.ndarray, y: np.ndarray, config: TrainConfig) -> TrainResult:
    """Mini-batch SGD on in-memory data.

    ``losses[0]`` is the full-set loss at initialization; ``losses[e]`` is the
    sample-weighted mean batch loss seen during epoch ``e``.
    """
    if len(x) == 0:
        raise ValueError("empty training set")
    model = model.copy()
    xf = model._inputs(x)
    y = np.asarray(y, dtype=np.int64)
    losses = [model.loss_and_grads(xf, y)[0]]
    for epoch in range(1, config.epochs + 1):
        order = np.random.default_rng([config.seed, epoch]).permutation(len(xf))
        total = 0.0
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            batch_loss, grads = model.loss_and_grads(xf[idx], y[idx])
            total += batch_loss * len(idx)
            for k in model.PARAMS:
                model.params[k] -= config.learning_rate * grads[k]
        loss = total / len(xf)
        if not np.isfinite(loss) or not all(np.all(np.isfinite(v)) for v in model.params.values()):
            raise DivergenceError(f"divergence at epoch {epoch}")
        losses.append(loss)
        log.debug("epoch %d loss %.5f", epoch, loss)
    return TrainResult(model, losses)


def init_model(manifest_shape: Sequence[int], n_classes: int, config: TrainConfig) -> ToyModel:
    return ToyModel(manifest_shape, n_classes, config.hidden, config.seed)


def train(model_init: Optional[ToyModel], manifest: DatasetManifest,
          config: TrainConfig = TrainConfig()) -> TrainResult:
    frames = model_init.frames if model_init is not None else None
    x, y = load_arrays(manifest, frames)
    if model_init is None:
        model_init = init_model(x.shape[1:], manifest.class_count, config)
    return train_arrays(model_init, x, y, config)


def accuracy(model: ToyModel, x: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean(model.predict(x) == np.asarray(y)))


def attack_success_rate(model: ToyModel, x: np.ndarray, target: int) -> float:
    if len(x) == 0:
        raise ValueError("empty triggered test set")
    return float(np.mean(model.predict(x) == target))


def evaluate(model: ToyModel, clean_test: DatasetManifest,
             triggered_test: Optional[DatasetManifest] = None, target: Optional[int] = None):
    """(ACC, ASR); ASR is None when no triggered set is given."""
    x, y = load_arrays(clean_test, model.frames)
    acc = accuracy(model, x, y)
    if triggered_test is None:
        return acc, None
    if len(triggered_test) == 0:
        raise ValueError("empty triggered test set")
    t = triggered_test.target_class if target is None else target
    if t is None:
        raise ValueError("triggered test set has no target class")
    xt, _ = load_arrays(triggered_test, model.frames)
    return acc, attack_success_rate(model, xt, t)
