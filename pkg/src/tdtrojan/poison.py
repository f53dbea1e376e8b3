"""Dataset manifests and all-to-one poisoning.

A manifest is a JSON-lines file: the first line is a header
``{class_count, target_class, seed, trigger_spec}``, each following line a
record ``{path, label, poisoned, original_label}``. Relative sample paths are
resolved against the manifest's directory.
"""
from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .baselines import BaselineSpec, embed_baseline
from .trigger import TriggerSpec, embed_trigger
from .video import VideoTensor, downsample_frames, read_vten, write_vten

log = logging.getLogger(__name__)

Trigger = Union[TriggerSpec, BaselineSpec]


def apply_trigger(v: VideoTensor, trigger: Trigger) -> VideoTensor:
    if isinstance(trigger, TriggerSpec):
        return embed_trigger(v, trigger)
    return embed_baseline(v, trigger)


def trigger_to_dict(trigger: Optional[Trigger]) -> Optional[dict]:
    return None if trigger is None else trigger.to_dict()


def trigger_from_dict(d: Optional[dict]) -> Optional[Trigger]:
    if d is None:
        return None
    if "variant" in d:
        return BaselineSpec.from_dict(d)
    return TriggerSpec.from_dict(d)


@dataclass(frozen=True)
class Record:
    path: str
    label: int
    poisoned: bool = False
    original_label: Optional[int] = None

    def to_dict(self) -> dict:
        return {"path": self.path, "label": self.label, "poisoned": self.poisoned,
                "original_label": self.original_label}


@dataclass
class DatasetManifest:
    records: list
    class_count: int
    target_class: Optional[int] = None
    seed: Optional[int] = None
    trigger_spec: Optional[dict] = None
    root: Path = field(default_factory=Path.cwd, compare=False)

    def __post_init__(self):
        self.root = Path(self.root)
        self.validate()

    def validate(self) -> None:
        if self.class_count < 1:
            raise ValueError("class_count must be >= 1")
        if self.target_class is not None and not 0 <= self.target_class < self.class_count:
            raise ValueError(f"target class {self.target_class} outside [0, {self.class_count})")
        seen = set()
        for r in self.records:
            if not 0 <= r.label < self.class_count:
                raise ValueError(f"label {r.label} of {r.path} outside [0, {self.class_count})")
            if r.path in seen:
                raise ValueError(f"duplicate sample path {r.path}")
            seen.add(r.path)
            if r.poisoned:
                if r.label != self.target_class:
                    raise ValueError(f"poisoned record {r.path} is not labelled with the target class")
                if r.original_label is None or r.original_label == self.target_class:
                    raise ValueError(f"poisoned record {r.path} must come from a non-target class")

    def __len__(self):
        return len(self.records)

    def resolve(self, record: Record) -> Path:
        p = Path(record.path)
        return p if p.is_absolute() else self.root / p

    def load(self, record: Record) -> VideoTensor:
        path = self.resolve(record)
        if not path.exists():
            raise FileNotFoundError(f"missing sample file: {path}")
        return read_vten(path)

    def labels(self) -> np.ndarray:
        return np.array([r.label for r in self.records], dtype=np.int64)

    def class_counts(self) -> dict:
        counts = {c: 0 for c in range(self.class_count)}
        for r in self.records:
            counts[r.label] += 1
        return counts

    def poisoned_counts(self) -> dict:
        counts = {c: 0 for c in range(self.class_count)}
        for r in self.records:
            if r.poisoned:
                counts[r.original_label] += 1
        return counts

    def header(self) -> dict:
        return {"class_count": self.class_count, "target_class": self.target_class,
                "seed": self.seed, "trigger_spec": self.trigger_spec}

    def dumps(self) -> str:
        lines = [json.dumps(self.header(), sort_keys=True)]
        lines += [json.dumps(r.to_dict(), sort_keys=True) for r in self.records]
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        """Write the manifest; record paths are stored relative to its directory when possible."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        base = path.parent.resolve()
        recs = []
        for r in self.records:
            abs_path = self.resolve(r).resolve()
            try:
                rel = abs_path.relative_to(base).as_posix()
            except ValueError:
                rel = os.path.relpath(abs_path, base).replace(os.sep, "/")
            recs.append(replace(r, path=rel))
        out = DatasetManifest(recs, self.class_count, self.target_class, self.seed,
                              self.trigger_spec, root=base)
        path.write_text(out.dumps())

    @classmethod
    def load_file(cls, path) -> "DatasetManifest":
        path = Path(path)
        lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
        if not lines:
            raise ValueError(f"empty manifest file {path}")
        head = json.loads(lines[0])
        unknown = set(head) - {"class_count", "target_class", "seed", "trigger_spec"}
        if unknown or "class_count" not in head:
            raise ValueError(f"bad manifest header in {path}")
        records = []
        for ln in lines[1:]:
            d = json.loads(ln)
            if set(d) - {"path", "label", "poisoned", "original_label"}:
                raise ValueError(f"unknown record keys in {path}: {sorted(d)}")
            records.append(Record(d["path"], int(d["label"]), bool(d.get("poisoned", False)),
                                  d.get("original_label")))
        return cls(records, int(head["class_count"]), head.get("target_class"),
                   head.get("seed"), head.get("trigger_spec"), root=path.parent.resolve())


@dataclass(frozen=True)
class PoisonConfig:
    trigger: Trigger
    ratio: float
    target_class: int = 0
    seed: int = 0
    embed_before_downsample: bool = False
    downsample_target: Optional[int] = None

    def __post_init__(self):
        if not 0.0 <= self.ratio <= 1.0:
            raise ValueError(f"poisoning ratio must lie in [0, 1], got {self.ratio}")
        if self.target_class < 0:
            raise ValueError("target class must be >= 0")


def round_half_up(x: float) -> int:
    # guard against 0.2 * 15 = 3.0000000000000004 style noise
    return int(math.floor(round(x, 9) + 0.5))


def select_poison_indices(manifest: DatasetManifest, ratio: float, target: int,
                          seed: int) -> list:
    """Indices (into manifest.records) chosen per non-target class, in record order."""
    rng = np.random.default_rng(seed)
    chosen = []
    for c in range(manifest.class_count):
        if c == target:
            continue
        members = [i for i, r in enumerate(manifest.records) if r.label == c]
        k = round_half_up(ratio * len(members))
        if k:
            picks = rng.choice(len(members), size=k, replace=False)
            chosen.extend(members[j] for j in picks)
    return sorted(chosen)


def _prepare(v: VideoTensor, trigger: Trigger, downsample_target: Optional[int],
             embed_before_downsample: bool) -> VideoTensor:
    if downsample_target is None:
        return apply_trigger(v, trigger)
    if embed_before_downsample:
        return downsample_frames(apply_trigger(v, trigger), downsample_target)
    return apply_trigger(downsample_frames(v, downsample_target), trigger)


def poison_dataset(manifest: DatasetManifest, config: PoisonConfig,
                   out_dir=None) -> DatasetManifest:
    """Build D_train: embed the trigger into a per-class fraction of non-target samples.

    Poisoned videos are written to ``out_dir`` (default ``<root>/poisoned``);
    the returned manifest is rooted at ``manifest.root``.
    """
    if any(r.poisoned for r in manifest.records):
        raise ValueError("input manifest already contains poisoned records")
    t = config.target_class
    if t >= manifest.class_count:
        raise ValueError(f"target class {t} outside [0, {manifest.class_count})")
    out_dir = Path(out_dir) if out_dir is not None else manifest.root / "poisoned"
    chosen = select_poison_indices(manifest, config.ratio, t, config.seed)
    records = list(manifest.records)
    if chosen:
        out_dir.mkdir(parents=True, exist_ok=True)
    for i in chosen:
        rec = records[i]
        v = manifest.load(rec)
        pv = _prepare(v, config.trigger, config.downsample_target,
                      config.embed_before_downsample)
        dest = out_dir / f"poison_{i:06d}.vten"
        write_vten(pv, dest)
        records[i] = Record(_relative(dest, manifest.root), t, True, rec.label)
    log.info("poisoned %d of %d samples", len(chosen), len(records))
    return DatasetManifest(records, manifest.class_count, t, config.seed,
                           trigger_to_dict(config.trigger), root=manifest.root)


def _relative(path: Path, root: Path) -> str:
    try:
        return path.resolve().relative_to(root.resolve()).as_posix()
    except ValueError:
        return str(path.resolve())


def build_triggered_testset(manifest: DatasetManifest, trigger: Trigger, target: int,
                            out_dir=None, downsample_target: Optional[int] = None,
                            embed_before_downsample: bool = False) -> DatasetManifest:
    """Triggered copies of every test sample whose label differs from ``target``."""
    sources = [(i, r) for i, r in enumerate(manifest.records) if r.label != target]
    if not sources:
        raise ValueError("no source samples: every test sample belongs to the target class")
    out_dir = Path(out_dir) if out_dir is not None else manifest.root / "triggered"
    out_dir.mkdir(parents=True, exist_ok=True)
    records = []
    for i, rec in sources:
        v = manifest.load(rec)
        tv = _prepare(v, trigger, downsample_target, embed_before_downsample)
        dest = out_dir / f"trig_{i:06d}.vten"
        write_vten(tv, dest)
        records.append(Record(_relative(dest, manifest.root), target, True, rec.label))
    return DatasetManifest(records, manifest.class_count, target, manifest.seed,
                           trigger_to_dict(trigger), root=manifest.root)
