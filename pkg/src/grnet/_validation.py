"""Input checks for the estimator API."""
from __future__ import annotations

import numpy as np

from .data import SamplePair


def check_rgbd(X, *, multiple: int | None = None) -> np.ndarray:
    """Validate an ``(n, H, W, 4)`` RGB-D stack (channels r, g, b, depth) in [0, 1]."""
    X = np.asarray(X, dtype=np.float32)
    if X.ndim == 3 and X.shape[-1] == 4:
        X = X[None]
    if X.ndim != 4 or X.shape[-1] != 4:
        raise ValueError(f"expected RGB-D input of shape (n, H, W, 4), got {X.shape}")
    if X.shape[0] == 0:
        raise ValueError("found an empty RGB-D stack")
    if not np.isfinite(X).all():
        raise ValueError("input contains NaN or infinity")
    if X.min() < 0.0 or X.max() > 1.0:
        raise ValueError("RGB-D values must lie in [0, 1]")
    if multiple and (X.shape[1] % multiple or X.shape[2] % multiple):
        raise ValueError(f"image size {X.shape[1:3]} not divisible by {multiple}")
    return X


def check_masks(y, X) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim == 4 and y.shape[-1] == 1:
        y = y[..., 0]
    if y.shape != X.shape[:3]:
        raise ValueError(f"masks of shape {y.shape} do not match inputs {X.shape[:3]}")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("masks must be binary (0/1)")
    return y.astype(np.uint8)


def stack_to_samples(X, y=None) -> list[SamplePair]:
    samples = []
    for i, x in enumerate(X):
        gt = y[i] if y is not None else np.zeros(x.shape[:2], dtype=np.uint8)
        samples.append(SamplePair.from_arrays(x[..., :3], x[..., 3:], gt, id=f"{i:05d}"))
    return samples


def samples_to_stack(samples):
    X = np.stack([np.concatenate([s.rgb, s.depth], axis=-1) for s in samples])
    y = np.stack([s.gt for s in samples])
    return X, y
