"""BCE, soft IoU and their sum (structure loss)."""
from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .exceptions import ShapeError

IOU_SMOOTH = 1.0


def _check(logits, gt):
    if logits.shape != gt.shape:
        raise ShapeError(f"logits {tuple(logits.shape)} and gt {tuple(gt.shape)} differ in shape")
    if not torch.all((gt == 0) | (gt == 1)):
        raise ValueError("ground truth must be binary (values in {0, 1})")


def bce(logits: torch.Tensor, gt: torch.Tensor) -> torch.Tensor:
    """Mean binary cross-entropy on logits, in the stable ``max(x,0) - x*y + log1p(exp(-|x|))`` form."""
    _check(logits, gt)
    return F.binary_cross_entropy_with_logits(logits, gt, reduction="mean")


def iou_loss(logits: torch.Tensor, gt: torch.Tensor, smooth: float = IOU_SMOOTH) -> torch.Tensor:
    """1 - (sum(p*g) + s) / (sum(p) + sum(g) - sum(p*g) + s), averaged over the batch.

    Inputs of shape N x ... are reduced per sample; 2-D inputs are one sample.
    """
    _check(logits, gt)
    p = torch.sigmoid(logits)
    if logits.dim() <= 2:
        p, gt = p.reshape(1, -1), gt.reshape(1, -1)
    else:
        p, gt = p.flatten(1), gt.flatten(1)
    inter = (p * gt).sum(1)
    union = p.sum(1) + gt.sum(1) - inter
    return (1.0 - (inter + smooth) / (union + smooth)).mean()


@dataclass
class LossReport:
    bce: torch.Tensor
    iou: torch.Tensor | None
    total: torch.Tensor
    edge_bce: torch.Tensor | None = None

    def as_floats(self) -> dict:
        out = {"bce": float(self.bce.detach()), "total": float(self.total.detach())}
        out["iou"] = float(self.iou.detach()) if self.iou is not None else float("nan")
        if self.edge_bce is not None:
            out["edge_bce"] = float(self.edge_bce.detach())
        return out


def structure_loss(logits, gt, edge_logits=None, edge_gt=None, edge_enabled=False,
                   mode="structure") -> LossReport:
    """BCE + soft IoU (``mode="bce"`` drops the IoU term), plus edge BCE when enabled."""
    b = bce(logits, gt)
    i = iou_loss(logits, gt) if mode == "structure" else None
    total = b + i if i is not None else b
    e = None
    if edge_enabled:
        if edge_logits is None or edge_gt is None:
            raise ValueError("edge loss enabled but edge logits or edge ground truth missing")
        e = bce(edge_logits, edge_gt)
        total = total + e
    return LossReport(bce=b, iou=i, total=total, edge_bce=e)
