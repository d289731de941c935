"""The full gated recoding network assembled from encoders, gate units, mixers and decoder."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn

from .backbone import Project64, StagedEncoder, check_input_size, depth_to_3ch, init_weights
from .config import ModelConfig
from .decoder import HybridDecoder
from .exceptions import ShapeError
from .gating import MGU, EncoderWAM, SemanticMerge
from .mixer import RecodingMixer

GATE_NAMES = ("Ga1", "Ga2", "Ga3", "Gb1", "Gb2", "Gb3", "Gr", "Gd")
BACKBONE_PREFIXES = ("encoder_rgb.", "encoder_depth.", "mixer_a.stage", "mixer_b.stage")


@dataclass
class ModelOutput:
    logits: torch.Tensor
    edge_logits: torch.Tensor | None = None
    gates: dict = field(default_factory=dict)
    intermediates: dict = field(default_factory=dict)

    def saliency(self) -> torch.Tensor:
        return torch.sigmoid(self.logits)


class GRNet(nn.Module):
    """Dual-encoder, gate-balanced, dual-mixer saliency network.

    Submodules present depend on ``config.ablation``: the depth encoder only
    with ``use_depth``; projections, gate units and mixers only with
    ``use_mixer``; gate WAMs only with ``mgu_gating``; the encoder WAM only
    for the full decoder with ``oegs_gating``.
    """

    def __init__(self, config: ModelConfig = ModelConfig(), seed: int = 0):
        super().__init__()
        self.config = config.validate()
        flags = config.ablation
        plan = config.plan
        w = plan.stage_widths

        self.encoder_rgb = StagedEncoder(plan)
        if flags.use_depth:
            self.encoder_depth = StagedEncoder(plan)
        if flags.use_mixer:
            self.proj_d = nn.ModuleList(Project64(c, 64) for c in w[1:])
            self.proj_r = nn.ModuleList(Project64(c, 64) for c in w[1:])
            self.semantic_d = SemanticMerge(64)
            self.semantic_r = SemanticMerge(64)
            self.mgus = nn.ModuleList(
                MGU(flags.wam_variant, gating=flags.mgu_gating, concat=config.mgu_concat)
                for _ in range(3)
            )
            cin = self.mgus[0].out_channels
            self.mixer_a = RecodingMixer(plan, cin)
            self.mixer_b = RecodingMixer(plan, cin)
        if flags.decoder_mode == "full" and flags.oegs_gating:
            self.encoder_wam = EncoderWAM(flags.wam_variant)
        self.decoder = HybridDecoder(
            level_channels=w[1:],
            s12_channels=(w[0], w[1]),
            mode=flags.decoder_mode,
            dual=flags.use_depth,
            edge_head=config.edge_supervision,
        )
        gen = torch.Generator().manual_seed(int(seed))
        init_weights(self, gen)

    @property
    def flags(self):
        return self.config.ablation

    @property
    def has_gates(self) -> bool:
        return self.flags.use_mixer and self.flags.mgu_gating

    def forward(self, rgb, depth=None) -> ModelOutput:
        if rgb.dim() == 3:
            rgb = rgb.unsqueeze(0)
            depth = None if depth is None else depth.unsqueeze(0)
        check_input_size(rgb.shape[-2], rgb.shape[-1])
        flags = self.flags
        out_hw = tuple(rgb.shape[-2:])
        r = self.encoder_rgb(rgb)
        if not flags.use_depth:
            dec = self.decoder(list(r[1:]), out_hw=out_hw)
            return ModelOutput(dec.saliency_logits, dec.edge_logits, {}, dec.intermediates)

        if depth is None:
            raise ShapeError("this model configuration needs a depth input")
        if depth.shape[-2:] != rgb.shape[-2:]:
            raise ShapeError("rgb and depth sizes differ")
        d = self.encoder_depth(depth_to_3ch(depth))
        if not flags.use_mixer:
            dec = self.decoder(list(d[1:]), list(r[1:]), out_hw=out_hw)
            return ModelOutput(dec.saliency_logits, dec.edge_logits, {}, dec.intermediates)

        dl = [p(f) for p, f in zip(self.proj_d, d[1:])]
        rl = [p(f) for p, f in zip(self.proj_r, r[1:])]
        ds = self.semantic_d(dl[2], dl[3])
        rs = self.semantic_r(rl[2], rl[3])
        gates = {}
        a_levels, b_levels = [], []
        for i, mgu in enumerate(self.mgus):
            a, b, ga, gb = mgu(dl[i], rl[i], ds, rs)
            a_levels.append(a)
            b_levels.append(b)
            if mgu.gating:
                gates[f"Ga{i + 1}"] = ga
                gates[f"Gb{i + 1}"] = gb
        xa = self.mixer_a(*a_levels)
        xb = self.mixer_b(*b_levels)

        edge_inputs = oegs_gates = None
        if flags.decoder_mode == "full":
            edge_inputs = (d.s1, d.s2, r.s1, r.s2)
            if flags.oegs_gating:
                gr, gd = self.encoder_wam(dl[0], rl[0], ds, rs)
                gates["Gr"], gates["Gd"] = gr, gd
            else:
                gr = gd = torch.ones(rgb.shape[0], dtype=rgb.dtype)
            oegs_gates = (gr, gd)
        dec = self.decoder(list(xa), list(xb), edge_inputs, oegs_gates, out_hw=out_hw)
        inter = dict(dec.intermediates, A=a_levels, B=b_levels, Ds=ds, Rs=rs)
        return ModelOutput(dec.saliency_logits, dec.edge_logits, gates, inter)

    def parameter_groups(self) -> dict[str, list[str]]:
        """Split parameter names into the ``backbone`` (staged encoders/mixers) and ``other`` groups."""
        groups = {"backbone": [], "other": []}
        for name, _ in self.named_parameters():
            key = "backbone" if name.startswith(BACKBONE_PREFIXES) else "other"
            groups[key].append(name)
        return groups

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {k: v.detach().cpu().numpy().copy() for k, v in self.state_dict().items()}


def to_tensors(samples, dtype=torch.float32):
    """Stack SamplePairs into NCHW ``rgb, depth, gt, edge`` tensors."""
    rgb = np.stack([s.rgb for s in samples]).transpose(0, 3, 1, 2)
    depth = np.stack([s.depth for s in samples]).transpose(0, 3, 1, 2)
    gt = np.stack([s.gt for s in samples])[:, None]
    edge = np.stack([s.edge for s in samples])[:, None]
    return (
        torch.as_tensor(np.ascontiguousarray(rgb), dtype=dtype),
        torch.as_tensor(np.ascontiguousarray(depth), dtype=dtype),
        torch.as_tensor(gt, dtype=dtype),
        torch.as_tensor(edge, dtype=dtype),
    )
