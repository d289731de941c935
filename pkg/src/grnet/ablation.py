"""Train-and-evaluate harness over ablation-table rows."""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, replace
from typing import Sequence

from .config import PRESETS, preset
from .data import SamplePair
from .exceptions import GRNetError
from .metrics import MetricReport
from .trainer import TrainConfig, evaluate, train

log = logging.getLogger(__name__)

CSV_FIELDS = ("row", "preset", "status", "mae", "f_beta_max", "f_beta_adaptive", "f_w_beta")


@dataclass
class AblationResult:
    row: int
    name: str
    report: MetricReport | None = None
    error: str | None = None


def resolve_rows(rows) -> list[tuple[int, str]]:
    names = list(PRESETS)
    out = []
    for r in rows:
        flags = preset(r)
        name = next(n for n in names if PRESETS[n] == flags)
        out.append((names.index(name) + 1, name))
    return out


def run_ablation_suite(base_config: TrainConfig, dataset: Sequence[SamplePair], rows,
                       eval_dataset: Sequence[SamplePair] | None = None) -> list[AblationResult]:
    """Train and evaluate each row with the same seed and data; failures are recorded, not raised."""
    results = []
    eval_dataset = dataset if eval_dataset is None else eval_dataset
    for idx, name in resolve_rows(rows):
        config = replace(base_config, ablation=PRESETS[name])
        try:
            ck = train(config, dataset)
            results.append(AblationResult(idx, name, evaluate(ck, eval_dataset)))
        except (GRNetError, RuntimeError, ValueError) as exc:
            log.warning("ablation row %d (%s) failed: %s", idx, name, exc)
            results.append(AblationResult(idx, name, error=f"{type(exc).__name__}: {exc}"))
    return results


def results_csv(results: Sequence[AblationResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for r in results:
        if r.report is None:
            w.writerow([r.row, r.name, "failed", "", "", "", ""])
            continue
        s = r.report.scalars()
        w.writerow([r.row, r.name, "ok"] + [f"{s[k]:.10g}" for k in CSV_FIELDS[3:]])
    return buf.getvalue()
