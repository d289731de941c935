"""Training loop, learning-rate schedule, evaluation and gate statistics."""
from __future__ import annotations

import csv
import logging
import math
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import torch
from PIL import Image

from .backbone import StagePlan
from .checkpoint import Checkpoint
from .config import AblationFlags, ModelConfig, preset
from .data import SamplePair, augment, resize_image, resize_mask, to_uint8
from .exceptions import (
    CheckpointMismatchError,
    ConfigError,
    EmptyInputError,
    GatingDisabledError,
    TrainingDivergedError,
)
from .losses import structure_loss
from .metrics import MetricReport, aggregate
from .model import GATE_NAMES, GRNet, to_tensors

log = logging.getLogger(__name__)

LOSS_LOG_FIELDS = ("step", "epoch", "lr_backbone", "lr_other", "bce", "iou", "total")


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 30
    batch_size: int = 4
    lr_backbone_max: float = 5e-3
    lr_other_max: float = 5e-2
    weight_decay: float = 5e-4
    momentum: float = 0.9
    warmup_fraction: float = 0.1
    seed: int = 0
    augmentation: bool | None = None
    loss_mode: str | None = None
    ablation: AblationFlags = field(default_factory=AblationFlags)
    plan: StagePlan = field(default_factory=StagePlan)
    input_size: int = 64
    max_steps: int | None = None
    edge_supervision: bool = False
    deterministic: bool = True

    def validate(self) -> "TrainConfig":
        if not 0.0 < self.warmup_fraction < 1.0:
            raise ConfigError(f"warmup_fraction must lie in (0, 1), got {self.warmup_fraction}")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ConfigError("batch_size and max_epochs must be >= 1")
        if self.max_steps is not None and self.max_steps < 1:
            raise ConfigError("max_steps must be >= 1")
        self.model_config().validate()
        return self

    @property
    def effective_loss_mode(self) -> str:
        return self.loss_mode or self.ablation.loss_mode

    @property
    def effective_augmentation(self) -> bool:
        return self.ablation.augmentation if self.augmentation is None else self.augmentation

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            plan=self.plan,
            ablation=self.ablation,
            input_size=self.input_size,
            edge_supervision=self.edge_supervision,
        )

    def total_steps(self, n_samples: int) -> int:
        if self.max_steps is not None:
            return self.max_steps
        return self.max_epochs * math.ceil(n_samples / self.batch_size)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["plan"] = {k: list(v) if isinstance(v, tuple) else v for k, v in d["plan"].items()}
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "TrainConfig":
        d = dict(d)
        plan = d.pop("plan", {})
        if isinstance(plan, str):
            plan = PLANS[plan]()
        elif not isinstance(plan, StagePlan):
            plan = StagePlan(**plan)
        abl = d.pop("ablation", {})
        if isinstance(abl, str):
            abl = preset(abl)
        elif not isinstance(abl, AblationFlags):
            abl = AblationFlags(**abl)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown train config keys: {sorted(unknown)}")
        return cls(plan=plan, ablation=abl, **d)


PLANS = {"tiny": StagePlan.tiny, "desk": StagePlan.desk, "resnet50": StagePlan.resnet50}

PROFILES = {
    "desk": TrainConfig(batch_size=4, max_steps=600, input_size=64, plan=StagePlan.desk()),
    "tiny": TrainConfig(batch_size=4, max_steps=600, input_size=64, plan=StagePlan.tiny()),
    "full": TrainConfig(batch_size=16, max_epochs=30, input_size=352, plan=StagePlan.resnet50()),
}


def lr_at(step: int, total_steps: int, lr_max: float, warmup_fraction: float = 0.1) -> float:
    """Linear warm-up from 0 to ``lr_max``, then linear decay to 0 at ``total_steps``."""
    if total_steps < 1:
        raise ValueError(f"total_steps must be >= 1, got {total_steps}")
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    if step == total_steps:
        return 0.0
    warm = warmup_steps(total_steps, warmup_fraction)
    if step <= warm:
        return lr_max * step / warm
    return lr_max * (total_steps - step) / (total_steps - warm)


def warmup_steps(total_steps: int, warmup_fraction: float) -> int:
    return min(max(1, round(warmup_fraction * total_steps)), max(total_steps - 1, 1))


@contextmanager
def deterministic_mode(enabled: bool = True):
    if not enabled:
        yield
        return
    prev_threads = torch.get_num_threads()
    prev_det = torch.are_deterministic_algorithms_enabled()
    torch.set_num_threads(1)
    torch.use_deterministic_algorithms(True)
    try:
        yield
    finally:
        torch.set_num_threads(prev_threads)
        torch.use_deterministic_algorithms(prev_det)


def _fit_size(samples: Sequence[SamplePair], size: int) -> list[SamplePair]:
    out = []
    for s in samples:
        if s.size == (size, size):
            out.append(s)
            continue
        out.append(SamplePair(
            rgb=resize_image(s.rgb, (size, size)),
            depth=resize_image(s.depth, (size, size)),
            gt=resize_mask(s.gt, (size, size)),
            edge=resize_mask(s.edge, (size, size)),
            id=s.id,
        ))
    return out


def build_optimizer(model: GRNet, config: TrainConfig) -> torch.optim.SGD:
    groups = model.parameter_groups()
    params = dict(model.named_parameters())
    return torch.optim.SGD(
        [
            {"params": [params[n] for n in groups["backbone"]], "name": "backbone",
             "lr_max": config.lr_backbone_max},
            {"params": [params[n] for n in groups["other"]], "name": "other",
             "lr_max": config.lr_other_max},
        ],
        lr=0.0,
        momentum=config.momentum,
        weight_decay=config.weight_decay,
    )


def _checkpoint(model, config, loss_log, step) -> Checkpoint:
    return Checkpoint(
        params=model.state_arrays(),
        model_config=config.model_config().to_dict(),
        train_config=config.to_dict(),
        seed=config.seed,
        loss_log=list(loss_log),
        step=step,
    )


def train(config: TrainConfig, dataset: Sequence[SamplePair], progress=None) -> Checkpoint:
    """Seeded mini-batch SGD with per-group warm-up/linear-decay learning rates.

    ``progress``, if given, is called with each loss-log row.
    """
    config.validate()
    if not dataset:
        raise EmptyInputError("cannot train on an empty dataset")
    with deterministic_mode(config.deterministic):
        return _train(config, list(dataset), progress)


def _train(config, dataset, progress):
    torch.manual_seed(config.seed)
    samples = _fit_size(dataset, config.input_size)
    model = GRNet(config.model_config(), seed=config.seed)
    model.train()
    opt = build_optimizer(model, config)
    rng = np.random.default_rng(config.seed)
    total = config.total_steps(len(samples))
    loss_mode = config.effective_loss_mode
    use_aug = config.effective_augmentation
    n = len(samples)
    loss_log = []
    step = epoch = 0
    while step < total:
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            if step >= total:
                break
            batch = [samples[i] for i in order[start:start + config.batch_size]]
            if use_aug:
                seeds = rng.integers(0, 2**31, size=len(batch))
                lo = max(1, int(0.75 * config.input_size))
                targets = rng.integers(lo, config.input_size + 1, size=len(batch))
                batch = [augment(s, int(t), int(sd)) for s, t, sd in zip(batch, targets, seeds)]
            rgb, depth, gt, edge = to_tensors(batch)
            for g in opt.param_groups:
                g["lr"] = lr_at(step, total, g["lr_max"], config.warmup_fraction)
            out = model(rgb, depth)
            report = structure_loss(out.logits, gt, out.edge_logits, edge,
                                    edge_enabled=config.edge_supervision, mode=loss_mode)
            if not torch.isfinite(report.total):
                raise TrainingDivergedError(step, _checkpoint(model, config, loss_log, step))
            opt.zero_grad(set_to_none=True)
            report.total.backward()
            opt.step()
            row = {
                "step": step,
                "epoch": epoch,
                "lr_backbone": opt.param_groups[0]["lr"],
                "lr_other": opt.param_groups[1]["lr"],
                **report.as_floats(),
            }
            row.pop("edge_bce", None)
            loss_log.append(row)
            if progress is not None:
                progress(row)
            step += 1
        log.info("epoch %d: mean loss %.4f", epoch,
                 np.mean([r["total"] for r in loss_log if r["epoch"] == epoch]))
        epoch += 1
    return _checkpoint(model, config, loss_log, step)


def epoch_losses(loss_log) -> list[float]:
    """Mean total loss per epoch."""
    by_epoch: dict[int, list[float]] = {}
    for r in loss_log:
        by_epoch.setdefault(r["epoch"], []).append(r["total"])
    return [float(np.mean(by_epoch[e])) for e in sorted(by_epoch)]


def write_loss_csv(loss_log, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=LOSS_LOG_FIELDS, extrasaction="ignore",
                           lineterminator="\n")
        w.writeheader()
        w.writerows(loss_log)
    return path


def load_model(checkpoint: Checkpoint, config: ModelConfig | None = None) -> GRNet:
    """Rebuild the network stored in ``checkpoint``; ``config``, if given, must match it."""
    stored = ModelConfig.from_dict(checkpoint.model_config)
    if config is not None and config != stored:
        raise CheckpointMismatchError(
            f"checkpoint was trained with {stored}, evaluation requested {config}"
        )
    model = GRNet(stored, seed=checkpoint.seed)
    expected = model.state_dict()
    missing = set(expected) - set(checkpoint.params)
    extra = set(checkpoint.params) - set(expected)
    if missing or extra:
        raise CheckpointMismatchError(
            f"parameter names differ: missing {sorted(missing)[:5]}, unexpected {sorted(extra)[:5]}"
        )
    state = {}
    for k, v in expected.items():
        arr = checkpoint.params[k]
        if tuple(arr.shape) != tuple(v.shape):
            raise CheckpointMismatchError(f"{k}: checkpoint shape {arr.shape}, model {tuple(v.shape)}")
        state[k] = torch.as_tensor(np.array(arr), dtype=v.dtype)
    model.load_state_dict(state)
    model.eval()
    return model


@torch.no_grad()
def infer(model: GRNet, samples: Sequence[SamplePair], batch_size: int = 8):
    """Saliency maps at each sample's own size plus the per-sample gate values."""
    size = model.config.input_size
    resized = _fit_size(samples, size)
    maps, gates = [], []
    for start in range(0, len(resized), batch_size):
        batch = resized[start:start + batch_size]
        rgb, depth, _, _ = to_tensors(batch)
        out = model(rgb, depth if model.flags.use_depth else None)
        prob = out.saliency().numpy()[:, 0].astype(np.float64)
        for i, s in enumerate(samples[start:start + batch_size]):
            p = prob[i]
            if p.shape != s.size:
                p = np.clip(resize_image(p, s.size), 0.0, 1.0)
            maps.append(p)
            gates.append({k: float(v[i]) for k, v in out.gates.items()})
    return maps, gates


def evaluate(checkpoint: Checkpoint, dataset: Sequence[SamplePair], export_dir=None,
             config: ModelConfig | None = None, deterministic: bool = True) -> MetricReport:
    if not dataset:
        raise EmptyInputError("cannot evaluate on an empty dataset")
    with deterministic_mode(deterministic):
        model = load_model(checkpoint, config)
        maps, _ = infer(model, dataset)
    if export_dir is not None:
        export_maps(maps, [s.id for s in dataset], export_dir)
    return aggregate(zip(maps, [s.gt for s in dataset]))


def export_maps(maps, stems, out_dir) -> int:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for p, stem in zip(maps, stems):
        Image.fromarray(to_uint8(p), "L").save(out / f"{stem}.png")
    return len(maps)


@dataclass
class GateStatsReport:
    per_dataset: dict  # name -> {gate: mean}
    counts: dict
    overall: dict

    def dominance(self, name: str | None = None) -> dict:
        """Depth-over-RGB flags: Gb_l > Ga_l per level and Gd > Gr."""
        m = self.overall if name is None else self.per_dataset[name]
        flags = {f"Gb{l}>Ga{l}": m[f"Gb{l}"] > m[f"Ga{l}"] for l in (1, 2, 3)}
        if not math.isnan(m["Gd"]):
            flags["Gd>Gr"] = m["Gd"] > m["Gr"]
        return flags

    def mean_depth_gate(self, name: str | None = None) -> float:
        m = self.overall if name is None else self.per_dataset[name]
        return float(np.mean([m["Gb1"], m["Gb2"], m["Gb3"]]))

    def rows(self):
        for name, m in list(self.per_dataset.items()) + [("ALL", self.overall)]:
            yield [name] + [m[g] for g in GATE_NAMES]

    def write_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["dataset", *GATE_NAMES])
            for row in self.rows():
                w.writerow([row[0]] + [f"{v:.6f}" for v in row[1:]])
        return path


def gate_stats(checkpoint: Checkpoint, datasets: Mapping[str, Sequence[SamplePair]],
               deterministic: bool = True) -> GateStatsReport:
    """Mean of each gate per dataset and pooled over all samples ("ALL").

    Gr and Gd are NaN for models built without the encoder-side WAM.
    """
    with deterministic_mode(deterministic):
        model = load_model(checkpoint)
        if not model.has_gates:
            raise GatingDisabledError("checkpoint was trained without gate units (mgu_gating off)")
        per, counts, pooled = {}, {}, []
        for name, samples in datasets.items():
            if not samples:
                raise EmptyInputError(f"dataset {name!r} is empty")
            _, gates = infer(model, samples)
            pooled.extend(gates)
            per[name] = _gate_means(gates)
            counts[name] = len(gates)
    return GateStatsReport(per, counts, _gate_means(pooled))


def _gate_means(gates) -> dict:
    return {g: float(np.mean([x[g] for x in gates])) if g in gates[0] else float("nan")
            for g in GATE_NAMES}


def with_overrides(config: TrainConfig, **kw) -> TrainConfig:
    return replace(config, **kw)
