"""End-to-end poison -> train -> evaluate runs, collateral-damage and factor sweeps."""
from __future__ import annotations

import csv
import io
import tempfile
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

from .poison import (DatasetManifest, PoisonConfig, Trigger, build_triggered_testset,
                     poison_dataset)
from .toy import (ToyModel, TrainConfig, accuracy, attack_success_rate, load_arrays,
                  train_arrays)
from .trigger import TriggerSpec, preset

FACTORS = {
    "ratio": "ratio",
    "frequency": "k0",
    "components": "set_size",
    "magnitude": "delta",
}

# desk-scale analogues of the full-scale grids
DEFAULT_GRIDS = {
    "ratio": [0.0, 0.01, 0.02, 0.05, 0.1, 0.2, 0.4],
    "frequency": [0, 2, 4, 8, 11],
    "components": [1, 2, 4, 8, 16],
    "magnitude": [3.0, 30.0, 300.0, 3000.0, 30000.0],
    "collateral": [0, 2, 4, 6, 8, 11],
}


@dataclass(frozen=True)
class PipelineConfig:
    trigger: Trigger = field(default_factory=lambda: preset("dft-desk"))
    ratio: float = 0.2
    target_class: int = 0
    seed: int = 0
    train: TrainConfig = field(default_factory=TrainConfig)


@dataclass
class PipelineResult:
    model: ToyModel
    acc: float
    asr: Optional[float]
    losses: list
    poisoned: DatasetManifest


@dataclass
class SweepRow:
    factor: str
    value: float
    acc: float
    asr: float
    seed: int


def run_pipeline(train_manifest: DatasetManifest, test_manifest: DatasetManifest,
                 config: PipelineConfig, work_dir=None) -> PipelineResult:
    """Poison the clean training set, train a fresh model, report clean ACC and ASR."""
    with tempfile.TemporaryDirectory() as tmp:
        work = Path(work_dir) if work_dir is not None else Path(tmp)
        pcfg = PoisonConfig(config.trigger, config.ratio, config.target_class, config.seed)
        poisoned = poison_dataset(train_manifest, pcfg, out_dir=work / "poisoned")
        x, y = load_arrays(poisoned)
        model = ToyModel(x.shape[1:], train_manifest.class_count, config.train.hidden,
                         config.train.seed)
        result = train_arrays(model, x, y, config.train)
        xt, yt = load_arrays(test_manifest, result.model.frames)
        acc = accuracy(result.model, xt, yt)
        trig = build_triggered_testset(test_manifest, config.trigger, config.target_class,
                                       out_dir=work / "triggered")
        asr = attack_success_rate(result.model, load_arrays(trig, result.model.frames)[0],
                                  config.target_class)
    return PipelineResult(result.model, acc, asr, result.losses, poisoned)


def collateral_sweep(model: ToyModel, test_manifest: DatasetManifest, base_spec: TriggerSpec,
                     k0_list: Sequence[int], target: int = 0, work_dir=None) -> list:
    """ASR of an already-trained model when the test-time band starts at each k0."""
    if not k0_list:
        raise ValueError("empty k0 list")
    rows = []
    with tempfile.TemporaryDirectory() as tmp:
        work = Path(work_dir) if work_dir is not None else Path(tmp)
        for k0 in k0_list:
            trig = build_triggered_testset(test_manifest, base_spec.with_k0(int(k0)), target,
                                           out_dir=work / f"k0_{int(k0)}")
            xt, _ = load_arrays(trig, model.frames)
            rows.append((int(k0), attack_success_rate(model, xt, target)))
    return rows


def _vary(config: PipelineConfig, factor: str, value) -> PipelineConfig:
    attr = FACTORS[factor]
    if attr == "ratio":
        return replace(config, ratio=float(value))
    if not isinstance(config.trigger, TriggerSpec):
        raise ValueError(f"factor {factor!r} needs a transform-domain trigger")
    if attr == "set_size":
        trig = replace(config.trigger, set_size=int(value), x=None, y=None)
    elif attr == "k0":
        trig = config.trigger.with_k0(int(value))
    else:
        trig = replace(config.trigger, delta=float(value))
    return replace(config, trigger=trig)


def factor_sweep(train_manifest: DatasetManifest, test_manifest: DatasetManifest, factor: str,
                 values: Sequence, base: PipelineConfig = PipelineConfig(),
                 seeds: Sequence[int] = (0,)) -> list:
    """One full pipeline run per (value, seed); rows are (factor, value, acc, asr, seed)."""
    if factor not in FACTORS:
        raise ValueError(f"unknown factor {factor!r}; expected one of {sorted(FACTORS)}")
    if not values:
        raise ValueError("empty grid")
    rows = []
    for value in values:
        for seed in seeds:
            cfg = _vary(base, factor, value)
            cfg = replace(cfg, seed=seed, train=replace(cfg.train, seed=seed))
            res = run_pipeline(train_manifest, test_manifest, cfg)
            rows.append(SweepRow(factor, value, res.acc, res.asr, seed))
    return rows


def rows_to_csv(rows: Sequence[SweepRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["factor", "value", "acc", "asr", "seed"])
    for r in rows:
        w.writerow([r.factor, r.value, f"{r.acc:.6f}", f"{r.asr:.6f}", r.seed])
    return buf.getvalue()
