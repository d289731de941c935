"""scikit-learn compatible wrapper around training and inference."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_masks, check_rgbd, stack_to_samples
from .metrics import f_w_beta
from .trainer import PLANS, TrainConfig, infer, load_model, train
from .config import preset as get_preset


class GRNetSaliency(BaseEstimator):
    """Salient object detector on RGB-D stacks.

    ``X`` is an ``(n, H, W, 4)`` float array in [0, 1] holding RGB in the first
    three channels and depth in the last; ``y`` is an ``(n, H, W)`` binary mask
    stack. Inputs are resized to ``input_size`` for the network and the
    predictions resized back.

    Parameters mirror :class:`grnet.trainer.TrainConfig`; ``preset`` names a
    row of the ablation table and ``plan`` one of ``"tiny"``, ``"desk"`` or
    ``"resnet50"``.
    """

    def __init__(self, preset="structure_loss", plan="desk", input_size=64, max_steps=600,
                 batch_size=4, lr_backbone=5e-3, lr_other=5e-2, weight_decay=5e-4,
                 momentum=0.9, warmup_fraction=0.1, augmentation=False, threshold=0.5,
                 random_state=0):
        self.preset = preset
        self.plan = plan
        self.input_size = input_size
        self.max_steps = max_steps
        self.batch_size = batch_size
        self.lr_backbone = lr_backbone
        self.lr_other = lr_other
        self.weight_decay = weight_decay
        self.momentum = momentum
        self.warmup_fraction = warmup_fraction
        self.augmentation = augmentation
        self.threshold = threshold
        self.random_state = random_state

    def _train_config(self) -> TrainConfig:
        if self.plan not in PLANS:
            raise ValueError(f"plan must be one of {sorted(PLANS)}, got {self.plan!r}")
        return TrainConfig(
            ablation=get_preset(self.preset),
            plan=PLANS[self.plan](),
            input_size=self.input_size,
            max_steps=self.max_steps,
            batch_size=self.batch_size,
            lr_backbone_max=self.lr_backbone,
            lr_other_max=self.lr_other,
            weight_decay=self.weight_decay,
            momentum=self.momentum,
            warmup_fraction=self.warmup_fraction,
            augmentation=self.augmentation,
            seed=int(self.random_state or 0),
        ).validate()

    def fit(self, X, y):
        X = check_rgbd(X)
        y = check_masks(y, X)
        config = self._train_config()
        self.checkpoint_ = train(config, stack_to_samples(X, y))
        self.model_ = load_model(self.checkpoint_)
        self.loss_curve_ = [r["total"] for r in self.checkpoint_.loss_log]
        self.n_features_in_ = X.shape[-1]
        return self

    def _infer(self, X):
        check_is_fitted(self, "model_")
        X = check_rgbd(X)
        return infer(self.model_, stack_to_samples(X))

    def predict_proba(self, X) -> np.ndarray:
        """Saliency probability maps, shape ``(n, H, W)``."""
        maps, _ = self._infer(X)
        return np.stack(maps)

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X) >= self.threshold).astype(np.uint8)

    def gate_values(self, X) -> list[dict]:
        """Per-sample gate scalars (empty dicts for ungated presets)."""
        _, gates = self._infer(X)
        return gates

    def score(self, X, y) -> float:
        """Mean weighted F-measure of the probability maps."""
        X = check_rgbd(X)
        y = check_masks(y, X)
        maps = self.predict_proba(X)
        return float(np.mean([f_w_beta(p, g) for p, g in zip(maps, y)]))
