"""Recoding mixers: backbone stages 2-5 re-encoding gate-balanced features with step-wise insertion."""
from __future__ import annotations

from typing import NamedTuple

import torch
import torch.nn as nn

from .backbone import Project64, StagePlan, make_stage
from .exceptions import ShapeError
from .gating import upsample2


class MixerOutputs(NamedTuple):
    x2p: torch.Tensor  # stride 4
    x3p: torch.Tensor  # stride 8
    x4p: torch.Tensor  # stride 16
    x5p: torch.Tensor  # stride 32


class RecodingMixer(nn.Module):
    """Stages 2-5 of a staged backbone with balanced features inserted before stages 2, 3 and 4.

    x2p = S2(relu_conv64(b1))
    x3p = S3(relu_conv_w2(up2(b2)) + x2p)
    x4p = S4(relu_conv_w3(up2(b3)) + x3p)
    x5p = S5(x4p)
    """

    def __init__(self, plan: StagePlan = StagePlan(), in_channels=64):
        super().__init__()
        w = plan.stage_widths
        b = plan.blocks_per_stage
        self.plan = plan
        self.insert1 = Project64(in_channels, 64, activation="relu")
        self.insert2 = Project64(in_channels, w[1], activation="relu")
        self.insert3 = Project64(in_channels, w[2], activation="relu")
        # stage 2 receives stride-4 input directly, so it carries no pooling
        self.stage2 = make_stage(64, w[1], b[1], None)
        self.stage3 = make_stage(w[1], w[2], b[2], "conv")
        self.stage4 = make_stage(w[2], w[3], b[3], "conv")
        self.stage5 = make_stage(w[3], w[4], b[4], "conv")

    def forward(self, b1, b2, b3) -> MixerOutputs:
        h, w = b1.shape[-2:]
        for name, t, k in (("b2", b2, 2), ("b3", b3, 4)):
            if t.shape[-2] * k != h or t.shape[-1] * k != w:
                raise ShapeError(
                    f"{name} must be at 1/{k} of b1's size {h}x{w}, got {tuple(t.shape[-2:])}"
                )
        x2p = self.stage2(self.insert1(b1))
        x3p = self.stage3(self.insert2(upsample2(b2)) + x2p)
        x4p = self.stage4(self.insert3(upsample2(b3)) + x3p)
        x5p = self.stage5(x4p)
        return MixerOutputs(x2p, x3p, x4p, x5p)


def mix(b1, b2, b3, mixer: RecodingMixer) -> MixerOutputs:
    return mixer(b1, b2, b3)


def mix_pair(levels_a, levels_b, mixer_a: RecodingMixer, mixer_b: RecodingMixer):
    """Run Mixer-A on the A-features and Mixer-B on the B-features."""
    return mixer_a(*levels_a), mixer_b(*levels_b)
