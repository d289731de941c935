"""Command-line interface.

Subcommands: synth, train, eval, predict, gate-stats, ablate, preset-list.
Exit codes: 0 success, 2 configuration error, 3 data error, 4 training divergence.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np
import yaml
from PIL import Image

from . import __version__
from .ablation import results_csv, run_ablation_suite
from .checkpoint import Checkpoint
from .config import PRESETS, preset
from .data import (
    SamplePair,
    SynthSpec,
    _index_dir,
    _read_gray,
    _read_rgb,
    generate_synthetic,
    load_dataset,
    save_dataset,
    to_uint8,
)
from .exceptions import (
    CheckpointMismatchError,
    ConfigError,
    DataError,
    EmptyInputError,
    GatingDisabledError,
    InvalidSpecError,
    TrainingDivergedError,
)
from .trainer import (
    PLANS,
    PROFILES,
    TrainConfig,
    evaluate,
    gate_stats,
    infer,
    load_model,
    train,
    write_loss_csv,
)

log = logging.getLogger("grnet")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGED = 0, 2, 3, 4


# ------------------------------------------------------------------ config


def load_config_file(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            cfg = yaml.safe_load(fh) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    unknown = set(cfg) - {"synth", "train", "ablation", "profile"}
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    return cfg


def build_train_config(file_cfg: dict, args) -> TrainConfig:
    profile = getattr(args, "profile", None) or file_cfg.get("profile", "desk")
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}; choose from {sorted(PROFILES)}")
    base = PROFILES[profile].to_dict()
    base.update(file_cfg.get("train", {}))
    abl = file_cfg.get("ablation")
    if isinstance(abl, dict) and "preset" in abl:
        overrides = {k: v for k, v in abl.items() if k != "preset"}
        base["ablation"] = asdict(replace(preset(abl["preset"]), **overrides))
    elif abl is not None:
        base["ablation"] = abl
    overrides = {
        "seed": getattr(args, "seed", None),
        "max_steps": getattr(args, "max_steps", None),
        "batch_size": getattr(args, "batch_size", None),
        "input_size": getattr(args, "input_size", None),
        "plan": getattr(args, "plan", None),
    }
    base.update({k: v for k, v in overrides.items() if v is not None})
    if getattr(args, "preset", None):
        base["ablation"] = preset(args.preset)
    try:
        return TrainConfig.from_dict(base).validate()
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def build_synth_spec(file_cfg: dict, args) -> SynthSpec:
    d = dict(file_cfg.get("synth", {}))
    for key in ("n_samples", "image_size", "depth_mode", "rgb_mode", "seed"):
        v = getattr(args, key, None)
        if v is not None:
            d[key] = v
    try:
        return SynthSpec(**d).validate()
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def dataset_fingerprint(samples) -> str:
    h = hashlib.sha256()
    for s in samples:
        h.update(s.id.encode())
        h.update(s.fingerprint().encode())
    return h.hexdigest()[:16]


def write_manifest(run_dir: Path, **fields) -> Path:
    manifest = {"code_version": __version__, **fields}
    path = run_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")
    return path


def _dataset(args, file_cfg) -> tuple[list[SamplePair], dict]:
    if getattr(args, "data", None):
        samples = load_dataset(args.data)
        source = {"path": str(args.data)}
    elif "synth" in file_cfg:
        spec = build_synth_spec(file_cfg, args)
        samples = generate_synthetic(spec)
        source = {"synth": asdict(spec)}
    else:
        raise ConfigError("no dataset: pass --data or add a synth section to the config")
    if not samples:
        raise EmptyInputError("dataset is empty")
    return samples, source


# ------------------------------------------------------------------ commands


def cmd_synth(args) -> int:
    spec = build_synth_spec(load_config_file(args.config), args)
    samples = generate_synthetic(spec)
    save_dataset(samples, args.out)
    print(f"wrote {len(samples)} samples to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    file_cfg = load_config_file(args.config)
    config = build_train_config(file_cfg, args)
    samples, source = _dataset(args, file_cfg)
    run_dir = Path(args.run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    ck_path = run_dir / "checkpoint.grck"
    write_manifest(run_dir, config=config.to_dict(), seed=config.seed, dataset=source,
                   dataset_fingerprint=dataset_fingerprint(samples),
                   outputs={"checkpoint": str(ck_path), "loss_csv": str(run_dir / "loss.csv")})
    try:
        ck = train(config, samples)
    except TrainingDivergedError as exc:
        if exc.last_checkpoint is not None:
            exc.last_checkpoint.save(run_dir / "last_finite.grck")
            write_loss_csv(exc.last_checkpoint.loss_log, run_dir / "loss.csv")
        raise
    ck.save(ck_path)
    write_loss_csv(ck.loss_log, run_dir / "loss.csv")
    print(f"trained {ck.step} steps, final loss {ck.loss_log[-1]['total']:.4f}; checkpoint {ck_path}")
    return EXIT_OK


def cmd_eval(args) -> int:
    ck = Checkpoint.load(args.checkpoint)
    samples = load_dataset(args.data)
    if not samples:
        raise EmptyInputError(f"no samples under {args.data}")
    run_dir = Path(args.run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    maps_dir = run_dir / "maps" if args.export_maps else None
    report = evaluate(ck, samples, export_dir=maps_dir)
    name = args.name or Path(args.data).name
    model_name = args.model_name or Path(args.checkpoint).stem
    (run_dir / "metrics.csv").write_text(report.to_csv(name, model_name))
    (run_dir / "metrics.txt").write_text(report.to_text())
    print(report.to_text(), end="")
    return EXIT_OK


def predict(checkpoint: Checkpoint, input_dir, output_dir) -> int:
    """Write one 8-bit saliency map per rgb/depth pair under ``input_dir``; returns the count."""
    input_dir, output_dir = Path(input_dir), Path(output_dir)
    rgbs = _index_dir(input_dir / "rgb")
    depths = _index_dir(input_dir / "depth")
    model = load_model(checkpoint)
    output_dir.mkdir(parents=True, exist_ok=True)
    written = failed = 0
    for stem in sorted(set(rgbs) | set(depths)):
        try:
            if stem not in rgbs or stem not in depths:
                raise DataError("missing rgb or depth counterpart")
            rgb, depth = _read_rgb(rgbs[stem]), _read_gray(depths[stem])
            if rgb.shape[:2] != depth.shape:
                raise DataError(f"rgb {rgb.shape[:2]} vs depth {depth.shape}")
            sample = SamplePair.from_arrays(rgb, depth, np.zeros(depth.shape, np.uint8), id=stem)
            (prob,), _ = infer(model, [sample])
        except (OSError, DataError) as exc:
            log.warning("skipping %s: %s", stem, exc)
            failed += 1
            continue
        Image.fromarray(to_uint8(prob), "L").save(output_dir / f"{stem}.png")
        written += 1
    if failed and not written:
        raise DataError(f"all {failed} inputs under {input_dir} failed")
    return written


def cmd_predict(args) -> int:
    n = predict(Checkpoint.load(args.checkpoint), args.input, args.output)
    print(f"wrote {n} saliency maps to {args.output}")
    return EXIT_OK


def _parse_named(items):
    out = {}
    for item in items:
        name, sep, path = item.partition("=")
        if not sep:
            name, path = Path(item).name, item
        out[name] = load_dataset(path)
    return out


def cmd_gate_stats(args) -> int:
    ck = Checkpoint.load(args.checkpoint)
    report = gate_stats(ck, _parse_named(args.data))
    report.write_csv(args.out)
    print(Path(args.out).read_text(), end="")
    return EXIT_OK


def cmd_ablate(args) -> int:
    file_cfg = load_config_file(args.config)
    config = build_train_config(file_cfg, args)
    samples, source = _dataset(args, file_cfg)
    run_dir = Path(args.run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    rows = args.rows or list(PRESETS)
    write_manifest(run_dir, config=config.to_dict(), seed=config.seed, dataset=source,
                   dataset_fingerprint=dataset_fingerprint(samples), rows=rows,
                   outputs={"ablation_csv": str(run_dir / "ablation.csv")})
    results = run_ablation_suite(config, samples, rows)
    text = results_csv(results)
    (run_dir / "ablation.csv").write_text(text)
    print(text, end="")
    return EXIT_OK


def cmd_preset_list(args) -> int:
    for i, (name, flags) in enumerate(PRESETS.items(), 1):
        print(f"{i} {name}: " + ", ".join(f"{k}={v}" for k, v in asdict(flags).items()))
    return EXIT_OK


# ------------------------------------------------------------------ parser


def _add_synth_args(p):
    p.add_argument("--n-samples", dest="n_samples", type=int)
    p.add_argument("--image-size", dest="image_size", type=int)
    p.add_argument("--depth-mode", dest="depth_mode", choices=("faithful", "flat", "noise"))
    p.add_argument("--rgb-mode", dest="rgb_mode", choices=("clean", "cluttered"))


def _add_train_args(p):
    p.add_argument("--config", help="YAML file with synth/train/ablation sections")
    p.add_argument("--data", help="dataset root with rgb/, depth/, gt/")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--profile", choices=sorted(PROFILES))
    p.add_argument("--plan", choices=sorted(PLANS))
    p.add_argument("--seed", type=int)
    p.add_argument("--max-steps", dest="max_steps", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--input-size", dest="input_size", type=int)
    _add_synth_args(p)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="grnet", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="materialize a synthetic RGB-D dataset")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    _add_synth_args(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model")
    _add_train_args(p)
    p.add_argument("--preset", help="ablation row name or number")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--run-dir", required=True)
    p.add_argument("--name", help="dataset name for the metric CSV")
    p.add_argument("--model-name")
    p.add_argument("--export-maps", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="write saliency maps for rgb/depth pairs")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("gate-stats", help="average gate values per dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", nargs="+", required=True, metavar="NAME=DIR")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gate_stats)

    p = sub.add_parser("ablate", help="train and evaluate ablation rows")
    _add_train_args(p)
    p.add_argument("--rows", nargs="+", help="preset names or row numbers (default: all)")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("preset-list", help="list ablation presets")
    p.set_defaults(func=cmd_preset_list)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, InvalidSpecError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingDivergedError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (DataError, EmptyInputError, CheckpointMismatchError, GatingDisabledError,
            OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
