"""Command-line entry point: ``tdtrojan <command> ...``.

Diagnostics go to stderr; results go to stdout and/or files under ``--out``.
Every command that writes to ``--out`` also saves the resolved configuration
as ``config.json`` there.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from . import __version__
from .defense import (StripConfig, ac_detect, anomaly_report, calibrate_threshold,
                      strip_entropy)
from .poison import (DatasetManifest, PoisonConfig, apply_trigger, build_triggered_testset,
                     poison_dataset, trigger_from_dict, trigger_to_dict)
from .quality import localized_quality
from .sweeps import (DEFAULT_GRIDS, FACTORS, PipelineConfig, SweepRow, collateral_sweep,
                     factor_sweep, rows_to_csv, run_pipeline)
from .toy import (SyntheticCorpusSpec, ToyModel, TrainConfig, accuracy, attack_success_rate,
                  generate_corpus, load_arrays, train_arrays)
from .trigger import PRESETS, TriggerSpec, preset
from .video import read_vten, write_vten

log = logging.getLogger("tdtrojan")


class ConfigError(ValueError):
    pass


def _load_json(path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON in {path}: {e}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top-level JSON object expected")
    return data


def _check_keys(d: dict, allowed, where: str):
    unknown = set(d) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


def _resolve_trigger(args, cfg: dict, required: bool = True):
    """Trigger from --preset, else --config/--trigger file, else config keys."""
    if getattr(args, "preset", None):
        return preset(args.preset)
    spec_file = getattr(args, "trigger", None)
    if spec_file:
        return trigger_from_dict(_load_json(spec_file))
    if cfg.get("preset"):
        return preset(cfg["preset"])
    if cfg.get("trigger") is not None:
        return trigger_from_dict(cfg["trigger"])
    if required:
        raise ConfigError("a trigger is required: pass --preset or a spec file")
    return None


def _echo_config(out: Path, resolved: dict):
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(resolved, indent=2, sort_keys=True) + "\n")


TRAIN_KEYS = {"epochs", "batch_size", "learning_rate", "hidden"}


def _train_config(cfg: dict, seed: int) -> TrainConfig:
    kw = {k: cfg[k] for k in TRAIN_KEYS if k in cfg}
    return TrainConfig(seed=seed, **kw)


# commands -------------------------------------------------------------------

def cmd_gen_corpus(args) -> int:
    cfg = _load_json(args.config) if args.config else {}
    _check_keys(cfg, {f.name for f in fields(SyntheticCorpusSpec)}, "corpus config")
    if args.seed is not None:
        cfg["seed"] = args.seed
    spec = SyntheticCorpusSpec(**cfg)
    out = Path(args.out)
    _echo_config(out, asdict(spec))
    train, test = generate_corpus(spec, out)
    print(json.dumps({"train": str(out / "train.jsonl"), "test": str(out / "test.jsonl"),
                      "train_samples": len(train), "test_samples": len(test)}))
    return 0


def cmd_embed(args) -> int:
    cfg = _load_json(args.config) if args.config else {}
    if args.preset is None and not cfg:
        raise ConfigError("embed needs --preset or --config with a trigger spec")
    trigger = preset(args.preset) if args.preset else trigger_from_dict(cfg)
    src = Path(args.input)
    if not src.exists():
        raise FileNotFoundError(f"input not found: {src}")
    v = read_vten(src)
    out_v = apply_trigger(v, trigger)
    res = out_v.pixels.astype(np.float64) - v.pixels
    write_vten(out_v, args.output)
    print(json.dumps({"residual_linf": float(np.abs(res).max()),
                      "residual_l2": float(np.sqrt(np.sum(res**2)))}))
    return 0


POISON_KEYS = {"preset", "trigger", "ratio", "target_class", "seed",
               "embed_before_downsample", "downsample_target"}


def cmd_poison(args) -> int:
    cfg = _load_json(args.config) if args.config else {}
    _check_keys(cfg, POISON_KEYS, "poison config")
    for key, val in (("ratio", args.ratio), ("target_class", args.target_class),
                     ("seed", args.seed)):
        if val is not None:
            cfg[key] = val
    trigger = _resolve_trigger(args, cfg)
    pc = PoisonConfig(trigger, float(cfg.get("ratio", 0.2)), int(cfg.get("target_class", 0)),
                      int(cfg.get("seed", 0)), bool(cfg.get("embed_before_downsample", False)),
                      cfg.get("downsample_target"))
    manifest = DatasetManifest.load_file(args.manifest)
    out = Path(args.out)
    _echo_config(out, {"manifest": str(args.manifest), "trigger": trigger_to_dict(trigger),
                       "ratio": pc.ratio, "target_class": pc.target_class, "seed": pc.seed,
                       "embed_before_downsample": pc.embed_before_downsample,
                       "downsample_target": pc.downsample_target})
    poisoned = poison_dataset(manifest, pc, out_dir=out / "poisoned")
    poisoned.save(out / "train_poisoned.jsonl")
    counts = poisoned.poisoned_counts()
    print("class,poisoned")
    for c in range(manifest.class_count):
        print(f"{c},{counts[c]}")
    print(f"total,{sum(counts.values())}")
    return 0


TRAIN_EVAL_KEYS = TRAIN_KEYS | {"preset", "trigger", "target_class", "seed"}


def cmd_train_eval(args) -> int:
    cfg = _load_json(args.config) if args.config else {}
    _check_keys(cfg, TRAIN_EVAL_KEYS, "train-eval config")
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.target_class is not None:
        cfg["target_class"] = args.target_class
    for key in ("epochs", "learning_rate"):
        if getattr(args, key) is not None:
            cfg[key] = getattr(args, key)
    seed = int(cfg.get("seed", 0))
    tc = _train_config(cfg, seed)
    trigger = _resolve_trigger(args, cfg, required=False)
    train_m = DatasetManifest.load_file(args.train)
    test_m = DatasetManifest.load_file(args.test)
    target = cfg.get("target_class", train_m.target_class if train_m.target_class is not None else 0)
    out = Path(args.out)
    _echo_config(out, {"train": str(args.train), "test": str(args.test),
                       "trigger": trigger_to_dict(trigger), "target_class": target,
                       "train_config": asdict(tc)})
    x, y = load_arrays(train_m)
    model = ToyModel(x.shape[1:], train_m.class_count, tc.hidden, tc.seed)
    result = train_arrays(model, x, y, tc)
    result.model.save(out / "model.npz")
    (out / "loss.csv").write_text(result.loss_csv())
    xt, yt = load_arrays(test_m, result.model.frames)
    acc = accuracy(result.model, xt, yt)
    rows = [("ACC", acc)]
    if trigger is not None:
        trig = build_triggered_testset(test_m, trigger, target, out_dir=out / "triggered")
        trig.save(out / "test_triggered.jsonl")
        rows.append(("ASR", attack_success_rate(result.model,
                                                load_arrays(trig, result.model.frames)[0],
                                                target)))
    for name, val in rows:
        print(f"{name} & {100 * val:.2f}")
    return 0


SWEEP_KEYS = TRAIN_KEYS | {"values", "preset", "trigger", "ratio", "target_class", "seed",
                           "seeds"}


def cmd_sweep(args) -> int:
    grid = _load_json(args.grid) if args.grid else {}
    _check_keys(grid, SWEEP_KEYS, "sweep grid")
    values = grid.get("values", DEFAULT_GRIDS[args.kind] if not args.grid else None)
    if not values:
        raise ConfigError("empty grid")
    if args.seed is not None:
        grid["seed"] = args.seed
    seed = int(grid.get("seed", 0))
    trigger = _resolve_trigger(args, grid, required=False) or preset("dft-desk")
    base = PipelineConfig(trigger, float(grid.get("ratio", 0.2)),
                          int(grid.get("target_class", 0)), seed, _train_config(grid, seed))
    train_m = DatasetManifest.load_file(args.train)
    test_m = DatasetManifest.load_file(args.test)
    out = Path(args.out)
    _echo_config(out, {"kind": args.kind, "values": values, "trigger": trigger_to_dict(trigger),
                       "ratio": base.ratio, "target_class": base.target_class, "seed": seed,
                       "train_config": asdict(base.train)})
    if args.kind == "collateral":
        if not isinstance(trigger, TriggerSpec):
            raise ConfigError("collateral sweep needs a transform-domain trigger")
        res = run_pipeline(train_m, test_m, base, work_dir=out / "work")
        table = collateral_sweep(res.model, test_m, trigger, values, base.target_class,
                                 work_dir=out / "work")
        rows = [SweepRow("k0", k0, res.acc, asr, seed) for k0, asr in table]
    else:
        seeds = grid.get("seeds", [seed])
        rows = factor_sweep(train_m, test_m, args.kind, values, base, seeds)
    text = rows_to_csv(rows)
    (out / f"sweep_{args.kind}.csv").write_text(text)
    sys.stdout.write(text)
    return 0


def cmd_metrics(args) -> int:
    a, b = read_vten(args.a), read_vten(args.b)
    report = localized_quality([(a, b)], window=args.window, stride=args.stride,
                               per_video_stats=args.per_video_stats)
    print(report.to_json())
    if args.out:
        out = Path(args.out)
        _echo_config(out, {"a": str(args.a), "b": str(args.b), "window": args.window,
                           "stride": args.stride, "per_video_stats": args.per_video_stats})
        (out / "metrics.json").write_text(report.to_json() + "\n")
        (out / "metrics.csv").write_text(report.to_csv())
    return 0


def _videos(manifest_path):
    m = DatasetManifest.load_file(manifest_path)
    return m, [m.load(r) for r in m.records]


def cmd_detect(args) -> int:
    if args.kind == "zscore":
        if not args.values:
            raise ConfigError("zscore needs --values (JSON list or file)")
        p = Path(args.values)
        values = json.loads(p.read_text() if p.exists() else args.values)
        report = anomaly_report(values, args.threshold if args.threshold is not None else 2.0)
        print(report.table(), file=sys.stderr)
        print(report.to_json())
        return 0
    if not args.model:
        raise ConfigError(f"{args.kind} needs --model")
    model = ToyModel.load(args.model)
    if args.kind == "strip":
        if not (args.inputs and args.clean):
            raise ConfigError("strip needs --inputs and --clean manifests")
        cfg = StripConfig(blend_count=args.blend_count,
                          target_fpr=args.fpr, seed=args.seed or 0)
        _, clean = _videos(args.clean)
        _, inputs = _videos(args.inputs)
        clean_ent = [strip_entropy(model, v, clean, cfg) for v in clean]
        thr = calibrate_threshold(clean_ent, cfg.target_fpr)
        ent = [strip_entropy(model, v, clean, cfg) for v in inputs]
        flags = [bool(e < thr) for e in ent]
        print(json.dumps({"threshold": thr, "entropies": ent, "flagged": flags,
                          "detection_rate": float(np.mean(flags)),
                          "clean_fpr": float(np.mean(np.asarray(clean_ent) < thr))}, indent=2))
        return 0
    if not args.inputs:
        raise ConfigError("ac needs --inputs manifest")
    m, videos = _videos(args.inputs)
    cls = args.cls if args.cls is not None else (m.target_class or 0)
    idx = [i for i, r in enumerate(m.records) if r.label == cls]
    acts = model.activations([videos[i] for i in idx])
    res = ac_detect(acts, threshold=args.threshold if args.threshold is not None else 0.1,
                    seed=args.seed or 0)
    flagged_paths = [m.records[idx[i]].path for i in res.flagged]
    d = json.loads(res.to_json())
    d["flagged_paths"] = flagged_paths
    print(json.dumps(d, indent=2))
    return 0


# parser ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tdtrojan",
                                description="Transform-domain video backdoor toolkit")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-corpus", help="write a synthetic video corpus")
    g.add_argument("--out", required=True)
    g.add_argument("--config")
    g.add_argument("--seed", type=int)
    g.set_defaults(func=cmd_gen_corpus)

    e = sub.add_parser("embed", help="embed a trigger into one .vten video")
    e.add_argument("input")
    e.add_argument("output")
    e.add_argument("--preset", choices=sorted(PRESETS))
    e.add_argument("--config", help="trigger spec JSON (transform or baseline)")
    e.set_defaults(func=cmd_embed)

    po = sub.add_parser("poison", help="poison a training manifest")
    po.add_argument("manifest")
    po.add_argument("--out", required=True)
    po.add_argument("--config")
    po.add_argument("--preset", choices=sorted(PRESETS))
    po.add_argument("--trigger", help="trigger spec JSON file")
    po.add_argument("--ratio", type=float)
    po.add_argument("--target-class", type=int)
    po.add_argument("--seed", type=int)
    po.set_defaults(func=cmd_poison)

    t = sub.add_parser("train-eval", help="train the toy model and report ACC/ASR")
    t.add_argument("train")
    t.add_argument("test")
    t.add_argument("--out", required=True)
    t.add_argument("--config")
    t.add_argument("--preset", choices=sorted(PRESETS))
    t.add_argument("--trigger", help="trigger spec JSON file")
    t.add_argument("--target-class", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--epochs", type=int)
    t.add_argument("--learning-rate", dest="learning_rate", type=float)
    t.set_defaults(func=cmd_train_eval)

    s = sub.add_parser("sweep", help="collateral-damage or factor sweep")
    s.add_argument("kind", choices=["collateral"] + sorted(FACTORS))
    s.add_argument("--grid", help="grid JSON {values: [...], ...}")
    s.add_argument("--train", required=True)
    s.add_argument("--test", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--preset", choices=sorted(PRESETS))
    s.add_argument("--trigger")
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_sweep)

    m = sub.add_parser("metrics", help="PSNR/SSIM and localized window statistics")
    m.add_argument("a")
    m.add_argument("b")
    m.add_argument("--window", type=int, default=28)
    m.add_argument("--stride", type=int, default=14)
    m.add_argument("--per-video-stats", action="store_true")
    m.add_argument("--out")
    m.set_defaults(func=cmd_metrics)

    d = sub.add_parser("detect", help="MAD z-score, STRIP or activation clustering")
    d.add_argument("kind", choices=["zscore", "strip", "ac"])
    d.add_argument("--values", help="JSON list (inline or file) for zscore")
    d.add_argument("--model", help="model.npz from train-eval")
    d.add_argument("--inputs", help="manifest of inputs to screen")
    d.add_argument("--clean", help="clean manifest for STRIP blending/calibration")
    d.add_argument("--class", dest="cls", type=int)
    d.add_argument("--threshold", type=float)
    d.add_argument("--fpr", type=float, default=0.15)
    d.add_argument("--blend-count", type=int, default=100)
    d.add_argument("--seed", type=int)
    d.set_defaults(func=cmd_detect)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError, IndexError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
