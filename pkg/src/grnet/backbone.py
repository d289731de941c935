"""Staged residual encoder shared by the two perception encoders and the two mixers."""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from .exceptions import ShapeError

RESNET50_WIDTHS = (64, 256, 512, 1024, 2048)
RESNET50_BLOCKS = (1, 3, 4, 6, 3)


@dataclass(frozen=True)
class StagePlan:
    """Output widths and block counts of the five backbone stages."""

    stage_widths: tuple[int, ...] = (8, 16, 32, 64, 128)
    blocks_per_stage: tuple[int, ...] = (1, 1, 1, 1, 1)
    input_channels: int = 3

    def __post_init__(self):
        object.__setattr__(self, "stage_widths", tuple(int(w) for w in self.stage_widths))
        object.__setattr__(self, "blocks_per_stage", tuple(int(b) for b in self.blocks_per_stage))
        if len(self.stage_widths) != 5 or len(self.blocks_per_stage) != 5:
            raise ShapeError("a StagePlan needs exactly 5 widths and 5 block counts")
        if min(self.stage_widths) < 1 or min(self.blocks_per_stage) < 1:
            raise ShapeError("stage widths and block counts must be >= 1")

    @classmethod
    def desk(cls) -> "StagePlan":
        return cls()

    @classmethod
    def tiny(cls) -> "StagePlan":
        return cls(stage_widths=(4, 8, 8, 16, 16))

    @classmethod
    def resnet50(cls) -> "StagePlan":
        return cls(stage_widths=RESNET50_WIDTHS, blocks_per_stage=RESNET50_BLOCKS)


class StageFeatures(NamedTuple):
    s1: torch.Tensor  # stride 2
    s2: torch.Tensor  # stride 4
    s3: torch.Tensor  # stride 8
    s4: torch.Tensor  # stride 16
    s5: torch.Tensor  # stride 32


def conv3x3(cin, cout, stride=1, bias=False):
    return nn.Conv2d(cin, cout, 3, stride=stride, padding=1, bias=bias)


class ConvBNReLU(nn.Sequential):
    def __init__(self, cin, cout, kernel_size=3, stride=1):
        super().__init__(
            nn.Conv2d(cin, cout, kernel_size, stride=stride, padding=kernel_size // 2, bias=False),
            nn.BatchNorm2d(cout),
            nn.ReLU(inplace=False),
        )


class Bottleneck(nn.Module):
    """1x1 reduce, 3x3 (strided), 1x1 expand, with a projection shortcut when shapes change."""

    def __init__(self, cin, cout, stride=1):
        super().__init__()
        mid = max(1, cout // 4)
        self.conv1 = nn.Conv2d(cin, mid, 1, bias=False)
        self.bn1 = nn.BatchNorm2d(mid)
        self.conv2 = conv3x3(mid, mid, stride)
        self.bn2 = nn.BatchNorm2d(mid)
        self.conv3 = nn.Conv2d(mid, cout, 1, bias=False)
        self.bn3 = nn.BatchNorm2d(cout)
        self.shortcut = None
        if stride != 1 or cin != cout:
            self.shortcut = nn.Sequential(
                nn.Conv2d(cin, cout, 1, stride=stride, bias=False), nn.BatchNorm2d(cout)
            )

    def forward(self, x):
        out = F.relu(self.bn1(self.conv1(x)))
        out = F.relu(self.bn2(self.conv2(out)))
        out = self.bn3(self.conv3(out))
        identity = x if self.shortcut is None else self.shortcut(x)
        return F.relu(out + identity)


def make_stage(cin, cout, blocks, downsample):
    """``downsample`` is ``"pool"`` (max-pool then blocks), ``"conv"`` (first block strided) or None."""
    layers = []
    stride = 1
    if downsample == "pool":
        layers.append(nn.MaxPool2d(3, stride=2, padding=1))
    elif downsample == "conv":
        stride = 2
    for i in range(blocks):
        layers.append(Bottleneck(cin if i == 0 else cout, cout, stride if i == 0 else 1))
    return nn.Sequential(*layers)


def check_input_size(h, w, multiple=32):
    if h != w:
        raise ShapeError(f"input must be square, got {h}x{w}")
    if h % multiple:
        raise ShapeError(f"input size {h} is not divisible by {multiple}")


class StagedEncoder(nn.Module):
    """Five-stage encoder: strided 7x7 stem, then pooled and strided bottleneck stages.

    Stage outputs sit at strides 2, 4, 8, 16 and 32.
    """

    def __init__(self, plan: StagePlan = StagePlan()):
        super().__init__()
        self.plan = plan
        w = plan.stage_widths
        b = plan.blocks_per_stage
        self.stage1 = nn.Sequential(
            nn.Conv2d(plan.input_channels, w[0], 7, stride=2, padding=3, bias=False),
            nn.BatchNorm2d(w[0]),
            nn.ReLU(),
        )
        self.stage2 = make_stage(w[0], w[1], b[1], "pool")
        self.stage3 = make_stage(w[1], w[2], b[2], "conv")
        self.stage4 = make_stage(w[2], w[3], b[3], "conv")
        self.stage5 = make_stage(w[3], w[4], b[4], "conv")

    def forward(self, x) -> StageFeatures:
        check_input_size(x.shape[-2], x.shape[-1])
        s1 = self.stage1(x)
        s2 = self.stage2(s1)
        s3 = self.stage3(s2)
        s4 = self.stage4(s3)
        s5 = self.stage5(s4)
        return StageFeatures(s1, s2, s3, s4, s5)


def encode(image: torch.Tensor, encoder: StagedEncoder) -> StageFeatures:
    """Run ``encoder`` on an N x 3 x H x W batch (or a single 3 x H x W image)."""
    if image.dim() == 3:
        image = image.unsqueeze(0)
    return encoder(image)


class Project64(nn.Module):
    """3x3 convolution to a fixed channel count followed by ReLU or sigmoid."""

    def __init__(self, cin, cout=64, activation="relu"):
        super().__init__()
        if activation not in ("relu", "sigmoid"):
            raise ValueError(f"unknown activation {activation!r}")
        self.conv = nn.Conv2d(cin, cout, 3, padding=1)
        self.activation = activation

    def forward(self, x):
        y = self.conv(x)
        return torch.sigmoid(y) if self.activation == "sigmoid" else F.relu(y)


def project64(f: torch.Tensor, proj: Project64) -> torch.Tensor:
    return proj(f)


def depth_to_3ch(depth: torch.Tensor) -> torch.Tensor:
    """Replicate a single depth channel (dim -3) three times."""
    if depth.shape[-3] != 1:
        raise ShapeError(f"depth must have one channel, got {depth.shape[-3]}")
    reps = [1] * depth.dim()
    reps[-3] = 3
    return depth.repeat(*reps)


def init_weights(module: nn.Module, generator: torch.Generator | None = None) -> None:
    """Fan-in scaled normal init for convs and linears; BN to identity."""
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.Linear)):
            fan_in = m.weight[0].numel()
            with torch.no_grad():
                m.weight.normal_(0.0, (2.0 / fan_in) ** 0.5, generator=generator)
                if m.bias is not None:
                    m.bias.zero_()
        elif isinstance(m, nn.BatchNorm2d):
            nn.init.ones_(m.weight)
            nn.init.zeros_(m.bias)


def count_parameters(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())
