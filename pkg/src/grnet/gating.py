"""Semantic features, weight analysis modules and the modal-adaptive gate unit."""
from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from .backbone import Project64
from .exceptions import ShapeError

WAM_VARIANTS = ("simple", "mlp")


def upsample2(x: torch.Tensor) -> torch.Tensor:
    return F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)


def resize_to(x: torch.Tensor, hw) -> torch.Tensor:
    if tuple(x.shape[-2:]) == tuple(hw):
        return x
    return F.interpolate(x, size=tuple(hw), mode="bilinear", align_corners=False)


class SemanticMerge(nn.Module):
    """FPN-style merge of the two deepest levels: relu(conv(s4 + up2(s5)))."""

    def __init__(self, channels=64):
        super().__init__()
        self.conv = nn.Conv2d(channels, channels, 3, padding=1)

    def forward(self, s4, s5):
        if s5.shape[-2] * 2 != s4.shape[-2] or s5.shape[-1] * 2 != s4.shape[-1]:
            raise ShapeError(
                f"semantic merge needs s5 at half of s4's size, got {tuple(s4.shape[-2:])} "
                f"and {tuple(s5.shape[-2:])}"
            )
        return F.relu(self.conv(s4 + upsample2(s5)))


def semantic_merge(s4_64, s5_64, merge: SemanticMerge):
    return merge(s4_64, s5_64)


class WAM(nn.Module):
    """Weight analysis module: one scalar gate per sample from four 64-channel maps.

    ``simple``: sigmoid 3x3 conv to one channel, then global average pooling.
    ``mlp``: sigmoid 3x3 conv to 64 channels, global average pooling, then a
    64-16-1 perceptron with a ReLU hidden layer and sigmoid output.
    """

    def __init__(self, variant="simple", channels=64, hidden=16):
        super().__init__()
        if variant not in WAM_VARIANTS:
            raise ValueError(f"unknown WAM variant {variant!r}; expected one of {WAM_VARIANTS}")
        self.variant = variant
        self.channels = channels
        if variant == "simple":
            self.conv = nn.Conv2d(4 * channels, 1, 3, padding=1)
        else:
            self.conv = nn.Conv2d(4 * channels, 64, 3, padding=1)
            self.fc1 = nn.Linear(64, hidden)
            self.fc2 = nn.Linear(hidden, 1)

    def forward(self, d, r, ds, rs):
        hw = d.shape[-2:]
        if r.shape[-2:] != hw:
            raise ShapeError(f"WAM level inputs differ in size: {tuple(hw)} vs {tuple(r.shape[-2:])}")
        for name, t in (("D", d), ("R", r), ("Ds", ds), ("Rs", rs)):
            if t.shape[1] != self.channels:
                raise ShapeError(f"WAM input {name} has {t.shape[1]} channels, expected {self.channels}")
        x = torch.cat([d, r, resize_to(ds, hw), resize_to(rs, hw)], dim=1)
        pooled = torch.sigmoid(self.conv(x)).mean(dim=(2, 3))
        if self.variant == "simple":
            return pooled[:, 0]
        return torch.sigmoid(self.fc2(F.relu(self.fc1(pooled))))[:, 0]


def wam(d, r, ds, rs, module: WAM) -> torch.Tensor:
    return module(d, r, ds, rs)


def _as_gate(g, like):
    g = torch.as_tensor(g, dtype=like.dtype, device=like.device)
    if g.dim() == 0:
        g = g.expand(like.shape[0])
    return g.view(-1, 1, 1, 1)


class MGU(nn.Module):
    """Modal-adaptive gate unit for one encoder level.

    A = sd + Ga * sr and B = Gb * sd + sr, where sd, sr are sigmoid projections
    of the depth and RGB level features shared by both outputs. With
    ``concat=True`` the two addends are concatenated instead of summed
    (128 channels). With ``gating=False`` both gates are fixed to 1.
    """

    def __init__(self, variant="simple", gating=True, concat=False, channels=64):
        super().__init__()
        self.proj_d = Project64(channels, 64, activation="sigmoid")
        self.proj_r = Project64(channels, 64, activation="sigmoid")
        self.gating = gating
        self.concat = concat
        if gating:
            self.wam_a = WAM(variant, channels)
            self.wam_b = WAM(variant, channels)

    @property
    def out_channels(self):
        return 128 if self.concat else 64

    def forward(self, d, r, ds, rs, ga=None, gb=None):
        """Return ``(A, B, Ga, Gb)``; ``ga``/``gb`` override the computed gates when given."""
        if d.shape[-2:] != r.shape[-2:]:
            raise ShapeError(f"MGU level inputs differ in size: {tuple(d.shape)} vs {tuple(r.shape)}")
        sd = self.proj_d(d)
        sr = self.proj_r(r)
        if ga is None:
            ga = self.wam_a(d, r, ds, rs) if self.gating else torch.ones(d.shape[0], dtype=d.dtype)
        if gb is None:
            gb = self.wam_b(d, r, ds, rs) if self.gating else torch.ones(d.shape[0], dtype=d.dtype)
        ga_ = _as_gate(ga, sd)
        gb_ = _as_gate(gb, sd)
        if self.concat:
            a = torch.cat([sd, ga_ * sr], dim=1)
            b = torch.cat([gb_ * sd, sr], dim=1)
        else:
            a = sd + ga_ * sr
            b = gb_ * sd + sr
        return a, b, ga_.view(-1), gb_.view(-1)


def mgu_fuse(d, r, ds, rs, unit: MGU, ga=None, gb=None):
    return unit(d, r, ds, rs, ga=ga, gb=gb)


class EncoderWAM(nn.Module):
    """Two independent WAMs on the level-2 features emitting (Gr, Gd) for edge guidance."""

    def __init__(self, variant="simple", channels=64):
        super().__init__()
        self.wam_r = WAM(variant, channels)
        self.wam_d = WAM(variant, channels)

    def forward(self, d2, r2, ds, rs):
        return self.wam_r(d2, r2, ds, rs), self.wam_d(d2, r2, ds, rs)


def encoder_wam(d2, r2, ds, rs, module: EncoderWAM):
    return module(d2, r2, ds, rs)
