"""Hybrid branch decoder: level fusion, progressive and parallel branches, edge guidance, head."""
from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn as nn
import torch.nn.functional as F

from .backbone import ConvBNReLU
from .exceptions import ShapeError
from .gating import resize_to, upsample2

DECODER_MODES = ("fpn", "pf", "full")


class LevelFusion(nn.Module):
    """C_l = conv(cat(proj(xA), proj(xB))); with a single input only that projection is used."""

    def __init__(self, cin_a, cin_b=None, channels=64):
        super().__init__()
        self.proj_a = ConvBNReLU(cin_a, channels)
        self.proj_b = ConvBNReLU(cin_b, channels) if cin_b else None
        n = 2 if cin_b else 1
        self.fuse = ConvBNReLU(n * channels, channels)

    def forward(self, xa, xb=None):
        parts = [self.proj_a(xa)]
        if self.proj_b is not None:
            if xb is None or xb.shape[-2:] != xa.shape[-2:]:
                raise ShapeError(
                    f"level fusion inputs differ in size: {tuple(xa.shape[-2:])} vs "
                    f"{None if xb is None else tuple(xb.shape[-2:])}"
                )
            parts.append(self.proj_b(xb))
        return self.fuse(torch.cat(parts, dim=1))


def fuse_levels(xa, xb, fusion: LevelFusion):
    return fusion(xa, xb)


class ProgressiveBranch(nn.Module):
    """Top-down pyramid: F5 = conv(C5), F_l = conv(C_l + up2(F_{l+1})); F1 = up2(conv(F2))."""

    def __init__(self, channels=64, with_guide=False):
        super().__init__()
        self.conv5 = ConvBNReLU(channels, channels)
        self.conv4 = ConvBNReLU(channels, channels)
        self.conv3 = ConvBNReLU(channels, channels)
        self.conv2 = ConvBNReLU(channels, channels)
        self.guide = ConvBNReLU(channels, channels) if with_guide else None

    def forward(self, c2, c3, c4, c5):
        f = self.conv5(c5)
        f = self.conv4(c4 + upsample2(f))
        f = self.conv3(c3 + upsample2(f))
        f2 = self.conv2(c2 + upsample2(f))
        f1 = upsample2(self.guide(f2)) if self.guide is not None else None
        return f2, f1


def progressive_branch(c2, c3, c4, c5, branch: ProgressiveBranch):
    return branch(c2, c3, c4, c5)


class EdgeGuidance(nn.Module):
    """Optional edge guidance stream.

    Per modality, stage-1 and upsampled stage-2 encoder features are fused to
    64 channels, masked by a sigmoid map predicted from the semantic guide F1,
    then weighted by the modality gate: edge = Gd * Ed + Gr * Er.
    """

    def __init__(self, s1_channels, s2_channels, channels=64):
        super().__init__()
        self.edge_d = ConvBNReLU(s1_channels + s2_channels, channels)
        self.edge_r = ConvBNReLU(s1_channels + s2_channels, channels)
        self.semantic = nn.Conv2d(channels, 1, 3, padding=1)

    def modal_features(self, s1_d, s2_d, s1_r, s2_r):
        if s2_d.shape[-2] * 2 != s1_d.shape[-2] or s2_r.shape[-2] * 2 != s1_r.shape[-2]:
            raise ShapeError("edge guidance needs stage-2 features at half the stage-1 size")
        if s1_d.shape[-2:] != s1_r.shape[-2:]:
            raise ShapeError("depth and RGB stage-1 features differ in size")
        ed = self.edge_d(torch.cat([upsample2(s2_d), s1_d], dim=1))
        er = self.edge_r(torch.cat([upsample2(s2_r), s1_r], dim=1))
        return ed, er

    def suppression(self, f1, hw):
        return torch.sigmoid(resize_to(self.semantic(f1), hw))

    def forward(self, s1_d, s2_d, s1_r, s2_r, f1, gr, gd):
        ed, er = self.modal_features(s1_d, s2_d, s1_r, s2_r)
        mask = self.suppression(f1, ed.shape[-2:])
        gr = torch.as_tensor(gr, dtype=ed.dtype).reshape(-1, 1, 1, 1)
        gd = torch.as_tensor(gd, dtype=ed.dtype).reshape(-1, 1, 1, 1)
        return gd * (ed * mask) + gr * (er * mask)


def oegs(s1_d, s2_d, s1_r, s2_r, f1, gr, gd, stream: EdgeGuidance):
    return stream(s1_d, s2_d, s1_r, s2_r, f1, gr, gd)


class ParallelBranch(nn.Module):
    """Each C_l projected and upsampled to stride 2; P2 optionally concatenated with edge features."""

    def __init__(self, channels=64, with_edge=False):
        super().__init__()
        self.paths = nn.ModuleList(ConvBNReLU(channels, channels) for _ in range(4))
        self.with_edge = with_edge
        self.edge_fuse = ConvBNReLU(2 * channels, channels) if with_edge else None
        self.out = ConvBNReLU(channels, channels)

    def forward(self, c2, c3, c4, c5, edge_feat=None):
        hw = (c2.shape[-2] * 2, c2.shape[-1] * 2)
        ups = [resize_to(p(c), hw) for p, c in zip(self.paths, (c2, c3, c4, c5))]
        if self.with_edge:
            if edge_feat is None:
                raise ShapeError("parallel branch was built with edge guidance but got no edge features")
            ups[0] = self.edge_fuse(torch.cat([ups[0], resize_to(edge_feat, hw)], dim=1))
        return self.out(sum(ups))


def parallel_branch(c2, c3, c4, c5, edge_feat, branch: ParallelBranch):
    return branch(c2, c3, c4, c5, edge_feat)


@dataclass
class DecoderOutputs:
    saliency_logits: torch.Tensor
    edge_logits: torch.Tensor | None = None
    intermediates: dict = field(default_factory=dict)


class PredictHead(nn.Module):
    """1x1 logit projection of cat(up(F2), P) at stride 2, bilinearly upsampled to input size."""

    def __init__(self, channels=64, with_parallel=True, edge_head=False):
        super().__init__()
        self.with_parallel = with_parallel
        self.logit = nn.Conv2d(channels * (2 if with_parallel else 1), 1, 1)
        self.edge_logit = nn.Conv2d(channels, 1, 1) if edge_head else None

    def forward(self, f2, p=None, edge_feat=None, out_hw=None):
        hw = (f2.shape[-2] * 2, f2.shape[-1] * 2)
        feats = [upsample2(f2)]
        if self.with_parallel:
            feats.append(resize_to(p, hw))
        logits = self.logit(torch.cat(feats, dim=1))
        out_hw = out_hw or (hw[0] * 2, hw[1] * 2)
        logits = resize_to(logits, out_hw)
        edge_logits = None
        if self.edge_logit is not None and edge_feat is not None:
            edge_logits = resize_to(self.edge_logit(edge_feat), out_hw)
        return DecoderOutputs(logits, edge_logits)


class HybridDecoder(nn.Module):
    """Wires level fusion, branches and head according to ``mode`` (fpn | pf | full)."""

    def __init__(self, level_channels, s12_channels=None, mode="full", dual=True,
                 edge_head=False, channels=64):
        super().__init__()
        if mode not in DECODER_MODES:
            raise ValueError(f"decoder mode must be one of {DECODER_MODES}, got {mode!r}")
        self.mode = mode
        self.fusions = nn.ModuleList(
            LevelFusion(c, c if dual else None, channels) for c in level_channels
        )
        self.progressive = ProgressiveBranch(channels, with_guide=mode == "full")
        self.parallel = ParallelBranch(channels, with_edge=mode == "full") if mode != "fpn" else None
        self.oegs = EdgeGuidance(*s12_channels, channels) if mode == "full" else None
        self.head = PredictHead(channels, with_parallel=mode != "fpn",
                                edge_head=edge_head and mode == "full")

    def forward(self, levels_a, levels_b=None, edge_inputs=None, gates=None, out_hw=None):
        """``levels_*`` are the four stride-4..32 features; ``edge_inputs`` = (s1_d, s2_d, s1_r, s2_r)."""
        if levels_b is None:
            levels_b = [None] * 4
        cs = [f(a, b) for f, a, b in zip(self.fusions, levels_a, levels_b)]
        f2, f1 = self.progressive(*cs)
        inter = {"C": cs, "F2": f2, "F1": f1}
        p = edge_feat = None
        if self.oegs is not None:
            gr, gd = gates
            edge_feat = self.oegs(*edge_inputs, f1, gr, gd)
            inter["edge_feat"] = edge_feat
        if self.parallel is not None:
            p = self.parallel(*cs, edge_feat)
            inter["P"] = p
        out = self.head(f2, p, edge_feat, out_hw)
        out.intermediates = inter
        return out


def predict_head(f2, p, head: PredictHead, edge_feat=None, out_hw=None):
    return head(f2, p, edge_feat, out_hw)
