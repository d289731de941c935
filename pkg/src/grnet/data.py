"""Sample containers, dataset ingestion, synthetic RGB-D scenes and augmentation.

All arrays are numpy, channels-last. RGB and depth are float32 in [0, 1];
masks are uint8 in {0, 1}.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image
from scipy import ndimage

from .exceptions import DataError, InvalidSpecError, OrphanFileError, SizeMismatchError

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")
MODALITY_DIRS = ("rgb", "depth", "gt")
DEPTH_MODES = ("faithful", "flat", "noise")
RGB_MODES = ("clean", "cluttered")


@dataclass
class SamplePair:
    rgb: np.ndarray
    depth: np.ndarray
    gt: np.ndarray
    edge: np.ndarray
    id: str = ""

    def __post_init__(self):
        if self.depth.ndim == 2:
            self.depth = self.depth[..., None]
        shapes = {self.rgb.shape[:2], self.depth.shape[:2], self.gt.shape, self.edge.shape}
        if len(shapes) != 1:
            raise SizeMismatchError(f"sample {self.id!r}: grid sizes differ: {sorted(shapes)}")
        if self.rgb.shape[2] != 3 or self.depth.shape[2] != 1:
            raise SizeMismatchError(f"sample {self.id!r}: expected 3 rgb and 1 depth channel")

    @property
    def size(self) -> tuple[int, int]:
        return self.gt.shape

    @classmethod
    def from_arrays(cls, rgb, depth, gt, id="", band=1):
        gt = np.asarray(gt).astype(np.uint8)
        return cls(
            rgb=np.asarray(rgb, dtype=np.float32),
            depth=np.asarray(depth, dtype=np.float32),
            gt=gt,
            edge=derive_edge_map(gt, band),
            id=id,
        )

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for a in (self.rgb, self.depth, self.gt, self.edge):
            h.update(np.ascontiguousarray(a).tobytes())
        return h.hexdigest()[:16]


@dataclass(frozen=True)
class SynthSpec:
    n_samples: int = 8
    image_size: int = 64
    depth_mode: str = "faithful"
    rgb_mode: str = "clean"
    seed: int = 0

    def validate(self) -> "SynthSpec":
        if self.n_samples < 1:
            raise InvalidSpecError(f"n_samples must be >= 1, got {self.n_samples}")
        if self.image_size < 32 or self.image_size % 32:
            raise InvalidSpecError(
                f"image_size must be a positive multiple of 32, got {self.image_size}"
            )
        if self.depth_mode not in DEPTH_MODES:
            raise InvalidSpecError(f"depth_mode must be one of {DEPTH_MODES}")
        if self.rgb_mode not in RGB_MODES:
            raise InvalidSpecError(f"rgb_mode must be one of {RGB_MODES}")
        return self


def _structuring_element(band: int) -> np.ndarray:
    cross = ndimage.generate_binary_structure(2, 1)
    return ndimage.iterate_structure(cross, band) if band > 1 else cross


def derive_edge_map(gt: np.ndarray, band: int = 1) -> np.ndarray:
    """Morphological gradient of a binary mask.

    A pixel is on the edge when the mask dilated by ``band`` differs from the
    mask eroded by ``band`` there. The structuring element is the 3x3 cross
    iterated ``band`` times. Borders are replicated so that a mask and its
    complement share the same edge map.
    """
    if band < 1:
        raise ValueError(f"band must be >= 1, got {band}")
    g = (np.asarray(gt) > 0).astype(np.uint8)
    se = _structuring_element(band)
    dil = ndimage.grey_dilation(g, footprint=se, mode="nearest")
    ero = ndimage.grey_erosion(g, footprint=se, mode="nearest")
    return (dil != ero).astype(np.uint8)


# --------------------------------------------------------------------------- IO


def _read_rgb(path: Path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0


def _read_gray(path: Path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("L"), dtype=np.float32) / 255.0


def _read_mask(path: Path) -> np.ndarray:
    with Image.open(path) as im:
        return (np.asarray(im.convert("L")) > 127).astype(np.uint8)


def _index_dir(d: Path) -> dict[str, Path]:
    if not d.is_dir():
        return {}
    return {
        p.stem: p
        for p in sorted(d.iterdir())
        if p.is_file() and p.suffix.lower() in IMAGE_EXTENSIONS
    }


def load_dataset(root_dir, size: int | None = None, band: int = 1) -> list[SamplePair]:
    """Read ``root/{rgb,depth,gt}/<stem>.<ext>`` triples in stem order.

    With ``size`` set, every grid is resized to size x size (bilinear for
    images, nearest for masks) before the edge map is derived.
    """
    root = Path(root_dir)
    if not root.is_dir():
        raise DataError(f"dataset root {root} is not a directory")
    index = {m: _index_dir(root / m) for m in MODALITY_DIRS}
    stems = set().union(*index.values())
    missing = {s: [m for m in MODALITY_DIRS if s not in index[m]] for s in stems}
    orphans = {s for s, m in missing.items() if m}
    if orphans:
        raise OrphanFileError(orphans, missing)

    samples = []
    for stem in sorted(stems):
        rgb = _read_rgb(index["rgb"][stem])
        depth = _read_gray(index["depth"][stem])
        gt = _read_mask(index["gt"][stem])
        if not (rgb.shape[:2] == depth.shape == gt.shape):
            raise SizeMismatchError(
                f"stem {stem!r}: rgb {rgb.shape[:2]}, depth {depth.shape}, gt {gt.shape}"
            )
        if size is not None:
            rgb = resize_image(rgb, (size, size))
            depth = resize_image(depth, (size, size))
            gt = resize_mask(gt, (size, size))
        samples.append(SamplePair.from_arrays(rgb, depth, gt, id=stem, band=band))
    return samples


def save_dataset(samples: Sequence[SamplePair], root_dir) -> Path:
    """Write samples as 8-bit PNGs in the rgb/depth/gt layout read by :func:`load_dataset`."""
    root = Path(root_dir)
    for m in MODALITY_DIRS:
        (root / m).mkdir(parents=True, exist_ok=True)
    for s in samples:
        Image.fromarray(to_uint8(s.rgb), "RGB").save(root / "rgb" / f"{s.id}.png")
        Image.fromarray(to_uint8(s.depth[..., 0]), "L").save(root / "depth" / f"{s.id}.png")
        Image.fromarray((s.gt * 255).astype(np.uint8), "L").save(root / "gt" / f"{s.id}.png")
    return root


def to_uint8(x: np.ndarray) -> np.ndarray:
    return np.rint(np.clip(x, 0.0, 1.0) * 255.0).astype(np.uint8)


def resize_image(img: np.ndarray, hw: tuple[int, int]) -> np.ndarray:
    """Bilinear resize of an HxW or HxWxC float image."""
    h, w = hw
    if img.shape[:2] == (h, w):
        return img.astype(np.float32, copy=True)
    if img.ndim == 2:
        im = Image.fromarray(img.astype(np.float32), mode="F")
        return np.asarray(im.resize((w, h), Image.BILINEAR), dtype=np.float32)
    return np.stack([resize_image(img[..., c], hw) for c in range(img.shape[2])], axis=-1)


def resize_mask(mask: np.ndarray, hw: tuple[int, int]) -> np.ndarray:
    h, w = hw
    if mask.shape[:2] == (h, w):
        return mask.copy()
    im = Image.fromarray(mask.astype(np.uint8), mode="L")
    return np.asarray(im.resize((w, h), Image.NEAREST), dtype=np.uint8)


# ------------------------------------------------------------------- synthetic


def _shape_mask(rng: np.random.Generator, size: int) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) + 0.5
    cy, cx = rng.uniform(0.25, 0.75, size=2) * size
    ry, rx = rng.uniform(0.1, 0.22, size=2) * size
    kind = rng.integers(3)
    if kind == 0:
        return ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
    if kind == 1:
        return (np.abs(yy - cy) <= ry) & (np.abs(xx - cx) <= rx)
    # upward triangle inscribed in the bounding box
    t = (yy - (cy - ry)) / (2 * ry)
    return (t >= 0) & (t <= 1) & (np.abs(xx - cx) <= t * rx)


def _distinct_color(rng: np.random.Generator, avoid: list[np.ndarray], min_dist=0.45):
    for _ in range(100):
        c = rng.uniform(0.0, 1.0, size=3)
        if all(np.abs(c - a).sum() >= min_dist for a in avoid):
            return c
    return c


def _smooth_texture(rng: np.random.Generator, size: int, cells: int = 8) -> np.ndarray:
    coarse = rng.uniform(0.0, 1.0, size=(cells, cells, 3)).astype(np.float32)
    return resize_image(coarse, (size, size))


def _synth_one(spec: SynthSpec, seq: np.random.SeedSequence, index: int) -> SamplePair:
    geo_seq, rgb_seq, depth_seq = seq.spawn(3)
    geo = np.random.default_rng(geo_seq)
    rgb_rng = np.random.default_rng(rgb_seq)
    depth_rng = np.random.default_rng(depth_seq)
    size = spec.image_size

    masks = [_shape_mask(geo, size) for _ in range(int(geo.integers(1, 4)))]
    gt = np.zeros((size, size), dtype=bool)
    for m in masks:
        gt |= m
    if not gt.any():
        gt[size // 2, size // 2] = True
        masks = [gt.copy()]

    bg = rgb_rng.uniform(0.0, 1.0, size=3)
    colors = []
    for _ in masks:
        colors.append(_distinct_color(rgb_rng, [bg] + colors))
    if spec.rgb_mode == "clean":
        rgb = np.broadcast_to(bg, (size, size, 3)).astype(np.float32).copy()
    else:
        rgb = _smooth_texture(rgb_rng, size)
        # distractors reuse foreground colors so appearance alone is ambiguous
        for _ in range(int(rgb_rng.integers(2, 5))):
            d = _shape_mask(rgb_rng, size) & ~gt
            rgb[d] = colors[int(rgb_rng.integers(len(colors)))]
    for m, c in zip(masks, colors):
        rgb[m] = c
    if spec.rgb_mode == "cluttered":
        rgb = rgb + rgb_rng.normal(0.0, 0.08, size=rgb.shape)

    if spec.depth_mode == "faithful":
        ramp = np.linspace(0.0, 0.15, size)[None, :]
        depth = 0.15 + ramp + np.zeros((size, size))
        for m in masks:
            depth[m] = depth_rng.uniform(0.7, 0.95)
        depth = depth + depth_rng.normal(0.0, 0.01, size=depth.shape)
    elif spec.depth_mode == "flat":
        depth = np.full((size, size), 0.5)
    else:
        depth = depth_rng.uniform(0.0, 1.0, size=(size, size))

    rgb = np.clip(rgb, 0.0, 1.0).astype(np.float32)
    depth = np.clip(depth, 0.0, 1.0).astype(np.float32)
    return SamplePair.from_arrays(rgb, depth, gt.astype(np.uint8), id=f"synth_{index:04d}")


def generate_synthetic(spec: SynthSpec) -> list[SamplePair]:
    """Render random geometric RGB-D scenes.

    Geometry, colours and depth draw from independent seed streams, so two
    specs that differ only in ``depth_mode`` share their RGB images and masks.
    """
    spec.validate()
    root = np.random.SeedSequence(spec.seed)
    return [_synth_one(spec, s, i) for i, s in enumerate(root.spawn(spec.n_samples))]


# ---------------------------------------------------------------- augmentation


def augment(sample: SamplePair, target: int, seed: int) -> SamplePair:
    """Joint random horizontal flip + random square crop, resized back to the input size."""
    h, w = sample.size
    if target > min(h, w):
        raise InvalidSpecError(f"crop target {target} exceeds image size {h}x{w}")
    if target < 1:
        raise InvalidSpecError("crop target must be positive")
    rng = np.random.default_rng(seed)
    flip = bool(rng.random() < 0.5)
    top = int(rng.integers(0, h - target + 1))
    left = int(rng.integers(0, w - target + 1))

    def geo(a):
        if flip:
            a = a[:, ::-1]
        return a[top : top + target, left : left + target]

    rgb = resize_image(geo(sample.rgb), (h, w))
    depth = resize_image(geo(sample.depth), (h, w))
    if depth.ndim == 2:
        depth = depth[..., None]
    gt = resize_mask(geo(sample.gt), (h, w))
    edge = resize_mask(geo(sample.edge), (h, w))
    return SamplePair(rgb=rgb, depth=depth, gt=gt, edge=edge, id=sample.id)


def augment_flip_drawn(seed: int) -> bool:
    """Whether :func:`augment` mirrors for this seed."""
    return bool(np.random.default_rng(seed).random() < 0.5)


__all__ = [
    "SamplePair",
    "SynthSpec",
    "derive_edge_map",
    "load_dataset",
    "save_dataset",
    "generate_synthetic",
    "augment",
    "augment_flip_drawn",
    "resize_image",
    "resize_mask",
    "to_uint8",
]
