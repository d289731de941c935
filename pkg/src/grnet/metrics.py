"""Saliency evaluation: MAE, PR curve, F-measure, weighted F-measure, aggregation."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .exceptions import EmptyInputError, ShapeError

BETA2 = 0.3
N_THRESHOLDS = 256
THRESHOLDS = np.arange(N_THRESHOLDS) / 255.0
EPS = np.finfo(np.float64).eps


def _prep(pred, gt):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ShapeError(f"prediction {pred.shape} and ground truth {gt.shape} differ in shape")
    return pred, gt > 0.5


def mae(pred, gt) -> float:
    pred, gt = _prep(pred, gt)
    return float(np.abs(pred - gt).mean())


def pr_curve(pred, gt) -> np.ndarray:
    """(256, 2) array of (precision, recall) at thresholds k/255, foreground = ``pred >= t``.

    An empty denominator counts as perfect: precision is 1 when nothing is
    predicted positive, recall is 1 when the mask is empty.
    """
    pred, gt = _prep(pred, gt)
    p = pred.ravel()
    g = gt.ravel()
    n_pos = g.sum()
    # counts of pred >= t via sorted search, exact for every threshold
    order = np.sort(p)
    pos_sorted = np.sort(p[g])
    n_pred = p.size - np.searchsorted(order, THRESHOLDS, side="left")
    tp = pos_sorted.size - np.searchsorted(pos_sorted, THRESHOLDS, side="left")
    precision = np.where(n_pred > 0, tp / np.maximum(n_pred, 1), 1.0)
    recall = np.where(n_pos > 0, tp / max(n_pos, 1), 1.0)
    return np.stack([precision, recall], axis=1)


def f_beta(precision, recall, beta2: float = BETA2):
    """(1 + b2) P R / (b2 P + R), zero where the denominator vanishes. Works elementwise."""
    p = np.asarray(precision, dtype=np.float64)
    r = np.asarray(recall, dtype=np.float64)
    den = beta2 * p + r
    with np.errstate(invalid="ignore", divide="ignore"):
        f = np.where(den > 0, (1 + beta2) * p * r / np.where(den > 0, den, 1.0), 0.0)
    return float(f) if f.ndim == 0 else f


def _gaussian_kernel(size=7, sigma=5.0):
    ax = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(ax[:, None] ** 2 + ax[None, :] ** 2) / (2 * sigma**2))
    return g / g.sum()


def f_w_beta(pred, gt, beta2: float = 1.0) -> float:
    """Weighted F-measure with distance-dependent error weighting.

    Background errors are replaced by the error of the nearest foreground
    pixel and smoothed with a 7x7 Gaussian (sigma 5); foreground pixels keep
    the smaller of raw and smoothed error; background errors are weighted by
    2 - exp(ln(0.5)/5 * distance to foreground).
    """
    pred, gt = _prep(pred, gt)
    if not gt.any():
        raise ValueError("weighted F-measure is undefined for an empty ground-truth mask")
    err = np.abs(pred - gt)
    dist, (iy, ix) = ndimage.distance_transform_edt(~gt, return_indices=True)
    err_t = err.copy()
    bg = ~gt
    err_t[bg] = err[iy[bg], ix[bg]]
    smoothed = ndimage.correlate(err_t, _gaussian_kernel(), mode="constant", cval=0.0)
    min_err = np.where(gt & (smoothed < err), smoothed, err)
    weight = np.where(bg, 2.0 - np.exp(np.log(0.5) / 5.0 * dist), 1.0)
    ew = min_err * weight
    tpw = gt.sum() - ew[gt].sum()
    fpw = ew[bg].sum()
    recall = 1.0 - ew[gt].mean()
    precision = tpw / (tpw + fpw + EPS)
    return float((1 + beta2) * recall * precision / (recall + beta2 * precision + EPS))


def adaptive_f_beta(pred, gt, beta2: float = BETA2) -> float:
    """F-measure at the per-image threshold min(2 * mean(pred), 1)."""
    pred, gt = _prep(pred, gt)
    t = min(2.0 * pred.mean(), 1.0)
    binary = pred >= t
    tp = np.sum(binary & gt)
    precision = tp / binary.sum() if binary.sum() else 1.0
    recall = tp / gt.sum() if gt.sum() else 1.0
    return f_beta(precision, recall, beta2)


@dataclass
class MetricReport:
    mae: float
    f_beta_max: float
    f_beta_adaptive: float
    f_w_beta: float
    pr: np.ndarray
    n_samples: int

    SCALARS = ("mae", "f_beta_max", "f_beta_adaptive", "f_w_beta")

    def scalars(self) -> dict:
        return {k: float(getattr(self, k)) for k in self.SCALARS}

    def to_text(self) -> str:
        lines = [f"{k}={v:.10g}" for k, v in self.scalars().items()]
        lines.append(f"n_samples={self.n_samples}")
        return "\n".join(lines) + "\n"

    def csv_rows(self, dataset: str, model: str) -> list[tuple]:
        rows = [(dataset, model, k, v) for k, v in self.scalars().items()]
        rows.append((dataset, model, "n_samples", self.n_samples))
        return rows

    def to_csv(self, dataset: str, model: str) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("dataset", "model", "metric", "value"))
        w.writerows(self.csv_rows(dataset, model))
        return buf.getvalue()

    def __eq__(self, other):
        if not isinstance(other, MetricReport):
            return NotImplemented
        return (
            self.scalars() == other.scalars()
            and self.n_samples == other.n_samples
            and np.array_equal(self.pr, other.pr)
        )


def aggregate(samples) -> MetricReport:
    """Average per-sample metrics over ``(pred, gt)`` pairs; PR curves averaged per threshold."""
    samples = list(samples)
    if not samples:
        raise EmptyInputError("cannot aggregate metrics over zero samples")
    maes, ws, adps, prs = [], [], [], []
    for pred, gt in samples:
        maes.append(mae(pred, gt))
        ws.append(f_w_beta(pred, gt))
        adps.append(adaptive_f_beta(pred, gt))
        prs.append(pr_curve(pred, gt))
    pr = np.mean(prs, axis=0)
    f_curve = f_beta(pr[:, 0], pr[:, 1])
    return MetricReport(
        mae=float(np.mean(maes)),
        f_beta_max=float(np.max(f_curve)),
        f_beta_adaptive=float(np.mean(adps)),
        f_w_beta=float(np.mean(ws)),
        pr=pr,
        n_samples=len(samples),
    )
