"""Model and ablation configuration, including the nine ablation-table presets."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace

from .backbone import StagePlan
from .decoder import DECODER_MODES
from .exceptions import ConfigError, UnknownPresetError
from .gating import WAM_VARIANTS

LOSS_MODES = ("bce", "structure")


@dataclass(frozen=True)
class AblationFlags:
    use_depth: bool = True
    use_mixer: bool = True
    mgu_gating: bool = True
    decoder_mode: str = "full"
    oegs_gating: bool = True
    wam_variant: str = "simple"
    loss_mode: str = "structure"
    augmentation: bool = False

    def validate(self) -> "AblationFlags":
        if self.decoder_mode not in DECODER_MODES:
            raise ConfigError(f"decoder_mode must be one of {DECODER_MODES}, got {self.decoder_mode!r}")
        if self.wam_variant not in WAM_VARIANTS:
            raise ConfigError(f"wam_variant must be one of {WAM_VARIANTS}, got {self.wam_variant!r}")
        if self.loss_mode not in LOSS_MODES:
            raise ConfigError(f"loss_mode must be one of {LOSS_MODES}, got {self.loss_mode!r}")
        if self.decoder_mode == "full" and not self.use_mixer:
            raise ConfigError("decoder_mode=full requires use_mixer")
        if self.mgu_gating and not self.use_mixer:
            raise ConfigError("mgu_gating requires use_mixer")
        if self.use_mixer and not self.use_depth:
            raise ConfigError("the recoding mixer needs both modalities (use_depth)")
        return self


# Rows of the ablation table, in order.
PRESETS: dict[str, AblationFlags] = {
    "w/o_depth": AblationFlags(
        use_depth=False, use_mixer=False, mgu_gating=False, decoder_mode="fpn",
        oegs_gating=False, loss_mode="bce",
    ),
    "en_fpn": AblationFlags(
        use_mixer=False, mgu_gating=False, decoder_mode="fpn", oegs_gating=False, loss_mode="bce",
    ),
    "en_mix_minus_fpn": AblationFlags(
        mgu_gating=False, decoder_mode="fpn", oegs_gating=False, loss_mode="bce",
    ),
    "en_mix_fpn": AblationFlags(decoder_mode="fpn", oegs_gating=False, loss_mode="bce"),
    "en_mix_pf": AblationFlags(decoder_mode="pf", oegs_gating=False, loss_mode="bce"),
    "en_mix_de_minus": AblationFlags(decoder_mode="full", oegs_gating=False, loss_mode="bce"),
    "en_mix_de": AblationFlags(decoder_mode="full", loss_mode="bce"),
    "structure_loss": AblationFlags(decoder_mode="full", loss_mode="structure"),
    "grnet_mlp": AblationFlags(decoder_mode="full", loss_mode="structure", wam_variant="mlp"),
}

PRESET_ROWS = {i + 1: name for i, name in enumerate(PRESETS)}


def preset(name) -> AblationFlags:
    """Flags for an ablation row, by name (``"en_fpn"``) or 1-based row number."""
    if isinstance(name, int) or (isinstance(name, str) and name.isdigit()):
        name = PRESET_ROWS.get(int(name), str(name))
    if name not in PRESETS:
        raise UnknownPresetError(name, PRESETS)
    return PRESETS[name]


@dataclass(frozen=True)
class ModelConfig:
    plan: StagePlan = field(default_factory=StagePlan)
    ablation: AblationFlags = field(default_factory=AblationFlags)
    input_size: int = 352
    mgu_concat: bool = False
    edge_supervision: bool = False

    def validate(self) -> "ModelConfig":
        self.ablation.validate()
        if self.input_size < 32 or self.input_size % 32:
            raise ConfigError(f"input_size must be a positive multiple of 32, got {self.input_size}")
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["plan"] = {k: list(v) if isinstance(v, tuple) else v for k, v in d["plan"].items()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        plan = StagePlan(**d.pop("plan", {}))
        abl = AblationFlags(**d.pop("ablation", {}))
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown model config keys: {sorted(extra)}")
        return cls(plan=plan, ablation=abl, **d)

    def with_ablation(self, flags: AblationFlags) -> "ModelConfig":
        return replace(self, ablation=flags)
