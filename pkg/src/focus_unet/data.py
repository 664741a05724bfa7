"""Image/mask ingestion, preprocessing, augmentation, split plans and the
synthetic blob dataset used for desk-scale experiments.

On-disk layout: a dataset root holds images/ and masks/ with matching PNG
file stems. Masks binarize at value > 127. Every stage preserves mask
binarity and image/mask dimensional agreement.

Loading and augmentation are pure per-sample given an explicit rng, so they
parallelize across samples with per-sample generators derived from
(seed, sample index).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

__all__ = [
    "AugmentationConfig",
    "DataError",
    "DimensionMismatchError",
    "ImageModeError",
    "Sample",
    "SplitPlan",
    "augment",
    "kfold_split",
    "load_dataset",
    "load_png_pair",
    "resize",
    "save_dataset",
    "single_split",
    "synth_polyp_dataset",
    "zscore_normalize",
]


class DataError(ValueError):
    """Problem with dataset contents."""


class ImageModeError(DataError):
    """Image file is not 8-bit RGB."""


class DimensionMismatchError(DataError):
    """Image and mask spatial dimensions differ."""


@dataclass
class Sample:
    """One image (H,W,3 reals in [0,255]) with its binary mask (H,W)."""

    image: np.ndarray
    mask: np.ndarray
    id: str

    def __post_init__(self):
        if self.image.shape[:2] != self.mask.shape:
            raise DimensionMismatchError(
                f"{self.id}: image {self.image.shape} vs mask {self.mask.shape}")
        if not np.isin(self.mask, (0, 1)).all():
            raise DataError(f"{self.id}: mask values must be 0 or 1")


@dataclass(frozen=True)
class AugmentationConfig:
    """Transform ranges all bracket the identity; each transform fires
    independently with probability apply_prob.

    elastic_sigma is the number of coarse displacement-grid cells per axis,
    elastic_alpha the displacement amplitude in pixels.
    """

    scale_min: float = 0.85
    scale_max: float = 1.15
    rotate_deg: float = 15.0
    elastic_alpha: float = 10.0
    elastic_sigma: int = 4
    gamma_min: float = 0.7
    gamma_max: float = 1.5
    apply_prob: float = 0.5

    def __post_init__(self):
        if not self.scale_min <= 1.0 <= self.scale_max:
            raise ValueError("scale range must bracket 1")
        if not self.gamma_min <= 1.0 <= self.gamma_max:
            raise ValueError("gamma range must bracket 1")
        if self.rotate_deg < 0 or self.elastic_alpha < 0:
            raise ValueError("rotation and elastic amplitudes must be >= 0")
        if self.elastic_sigma < 1:
            raise ValueError("elastic_sigma must be >= 1")
        if not 0.0 <= self.apply_prob <= 1.0:
            raise ValueError("apply_prob must be in [0, 1]")


@dataclass(frozen=True)
class SplitPlan:
    """Deterministic fold assignments: id -> fold index.

    kfold mode deals shuffled ids round-robin over k folds; single mode uses
    fold 0 as train and fold 1 as test.
    """

    assignments: dict
    mode: str
    k: int
    seed: int

    def ids(self):
        return list(self.assignments)

    def fold_ids(self, fold: int):
        return [i for i, f in self.assignments.items() if f == fold]

    def complement_ids(self, fold: int):
        return [i for i, f in self.assignments.items() if f != fold]


def kfold_split(ids, k: int = 5, seed: int = 0) -> SplitPlan:
    ids = [str(i) for i in ids]
    if len(set(ids)) != len(ids):
        raise DataError("duplicate sample ids")
    if not 2 <= k <= len(ids):
        raise ValueError(f"k={k} must be between 2 and the number of ids ({len(ids)})")
    order = np.random.default_rng(seed).permutation(sorted(ids))
    return SplitPlan(assignments={i: pos % k for pos, i in enumerate(order)},
                     mode="kfold", k=k, seed=seed)


def single_split(ids, train_fraction: float = 0.8, seed: int = 0) -> SplitPlan:
    ids = [str(i) for i in ids]
    if len(set(ids)) != len(ids):
        raise DataError("duplicate sample ids")
    n_train = int(round(train_fraction * len(ids)))
    if not 0 < n_train < len(ids):
        raise ValueError(
            f"train_fraction={train_fraction} leaves an empty partition for "
            f"{len(ids)} ids")
    order = np.random.default_rng(seed).permutation(sorted(ids))
    return SplitPlan(assignments={i: int(pos >= n_train) for pos, i in enumerate(order)},
                     mode="single", k=2, seed=seed)


def load_png_pair(image_path, mask_path) -> Sample:
    image_path, mask_path = Path(image_path), Path(mask_path)
    for p in (image_path, mask_path):
        if not p.is_file():
            raise FileNotFoundError(str(p))
    with Image.open(image_path) as im:
        if im.mode != "RGB":
            raise ImageModeError(f"{image_path}: expected an RGB image, got mode {im.mode}")
        image = np.asarray(im, dtype=np.float32)
    with Image.open(mask_path) as mm:
        mask_raw = np.asarray(mm.convert("L"))
    if image.shape[:2] != mask_raw.shape:
        raise DimensionMismatchError(
            f"{image_path.name}: image {image.shape[:2]} vs mask {mask_raw.shape}")
    return Sample(image=image, mask=(mask_raw > 127).astype(np.uint8),
                  id=image_path.stem)


def load_dataset(root) -> list:
    """All samples under root/images and root/masks, sorted by stem."""
    root = Path(root)
    images_dir, masks_dir = root / "images", root / "masks"
    if not images_dir.is_dir() or not masks_dir.is_dir():
        raise DataError(f"{root} must contain images/ and masks/ directories")
    stems = sorted(p.stem for p in images_dir.glob("*.png"))
    if not stems:
        raise DataError(f"no PNG images under {images_dir}")
    return [load_png_pair(images_dir / f"{s}.png", masks_dir / f"{s}.png")
            for s in stems]


def save_dataset(samples, root) -> None:
    """Write samples in the images//masks/ layout (masks as 0/255)."""
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "masks").mkdir(parents=True, exist_ok=True)
    for s in samples:
        img = np.clip(np.rint(s.image), 0, 255).astype(np.uint8)
        Image.fromarray(img, mode="RGB").save(root / "images" / f"{s.id}.png")
        Image.fromarray(s.mask * np.uint8(255), mode="L").save(
            root / "masks" / f"{s.id}.png")


def _nearest_indices(n_out: int, n_in: int) -> np.ndarray:
    centers = (np.arange(n_out) + 0.5) * (n_in / n_out)
    return np.clip(np.floor(centers).astype(int), 0, n_in - 1)


def _bilinear_resize(img: np.ndarray, h_out: int, w_out: int) -> np.ndarray:
    h_in, w_in = img.shape[:2]
    if (h_in, w_in) == (h_out, w_out):
        return img.astype(np.float32, copy=True)
    ys = np.clip((np.arange(h_out) + 0.5) * (h_in / h_out) - 0.5, 0, h_in - 1)
    xs = np.clip((np.arange(w_out) + 0.5) * (w_in / w_out) - 0.5, 0, w_in - 1)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h_in - 1)
    x1 = np.minimum(x0 + 1, w_in - 1)
    wy = (ys - y0)[:, None, None]
    wx = (xs - x0)[None, :, None]
    img = img.astype(np.float32)
    top = img[y0[:, None], x0[None, :]] * (1 - wx) + img[y0[:, None], x1[None, :]] * wx
    bottom = img[y1[:, None], x0[None, :]] * (1 - wx) + img[y1[:, None], x1[None, :]] * wx
    return top * (1 - wy) + bottom * wy


def resize(sample: Sample, height: int, width: int) -> Sample:
    """Bilinear for the image, nearest-neighbour for the mask (stays binary)."""
    if (height, width) == sample.image.shape[:2]:
        return Sample(sample.image.copy(), sample.mask.copy(), sample.id)
    image = _bilinear_resize(sample.image, height, width)
    iy = _nearest_indices(height, sample.mask.shape[0])
    ix = _nearest_indices(width, sample.mask.shape[1])
    mask = sample.mask[iy[:, None], ix[None, :]]
    return Sample(image=image, mask=mask.astype(np.uint8), id=sample.id)


def zscore_normalize(image: np.ndarray) -> np.ndarray:
    """Per-channel standardization to mean 0, std 1 (eps-guarded)."""
    mu = image.mean(axis=(0, 1), dtype=np.float64)
    sd = image.std(axis=(0, 1), dtype=np.float64)
    out = (image - mu) / np.maximum(sd, 1e-8)
    return out.astype(np.float32 if image.dtype != np.float64 else np.float64)


def _fetch_bilinear(img: np.ndarray, sy: np.ndarray, sx: np.ndarray) -> np.ndarray:
    """Sample (H,W,C) at float coords, zero outside the frame."""
    h, w = img.shape[:2]
    y0 = np.floor(sy).astype(int)
    x0 = np.floor(sx).astype(int)
    dy = (sy - y0)[..., None]
    dx = (sx - x0)[..., None]

    def tap(yi, xi):
        inside = ((yi >= 0) & (yi < h) & (xi >= 0) & (xi < w))[..., None]
        return img[np.clip(yi, 0, h - 1), np.clip(xi, 0, w - 1)] * inside

    return ((1 - dy) * (1 - dx) * tap(y0, x0) + (1 - dy) * dx * tap(y0, x0 + 1)
            + dy * (1 - dx) * tap(y0 + 1, x0) + dy * dx * tap(y0 + 1, x0 + 1))


def _fetch_nearest(mask: np.ndarray, sy: np.ndarray, sx: np.ndarray) -> np.ndarray:
    h, w = mask.shape
    yi = np.rint(sy).astype(int)
    xi = np.rint(sx).astype(int)
    inside = (yi >= 0) & (yi < h) & (xi >= 0) & (xi < w)
    return np.where(inside, mask[np.clip(yi, 0, h - 1), np.clip(xi, 0, w - 1)], 0)


def _elastic_field(rng, shape, cells: int, alpha: float):
    coarse_y = rng.uniform(-alpha, alpha, size=(cells + 1, cells + 1))
    coarse_x = rng.uniform(-alpha, alpha, size=(cells + 1, cells + 1))
    dy = _bilinear_resize(coarse_y[..., None], *shape)[..., 0]
    dx = _bilinear_resize(coarse_x[..., None], *shape)[..., 0]
    return dy, dx


def augment(sample: Sample, config: AugmentationConfig, rng) -> Sample:
    """Apply the configured random transforms.

    Image and mask get identical geometric transforms (mask via nearest
    sampling); gamma touches the image only, on [0,1]-rescaled intensities.
    Out-of-frame regions are zero-filled. With apply_prob = 0 this is the
    identity on both arrays. Draw order is fixed: five apply flags, then
    scale, angle, elastic field, gamma.
    """
    image = sample.image.astype(np.float32, copy=True)
    mask = sample.mask.copy()
    flags = rng.random(5) < config.apply_prob
    do_scale, do_rotate, do_elastic, do_mirror, do_gamma = flags

    if do_mirror:
        image = image[:, ::-1].copy()
        mask = mask[:, ::-1].copy()

    scale = float(rng.uniform(config.scale_min, config.scale_max)) if do_scale else 1.0
    angle = math.radians(float(rng.uniform(-config.rotate_deg, config.rotate_deg))) \
        if do_rotate else 0.0
    field = None
    if do_elastic and config.elastic_alpha > 0:
        field = _elastic_field(rng, mask.shape, config.elastic_sigma,
                               config.elastic_alpha)

    if scale != 1.0 or angle != 0.0 or field is not None:
        h, w = mask.shape
        cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
        py, px = np.mgrid[0:h, 0:w].astype(np.float64)
        ry, rx = py - cy, px - cx
        cos_t, sin_t = math.cos(angle), math.sin(angle)
        # inverse map of rotate-then-scale about the center
        sy = cy + (cos_t * ry + sin_t * rx) / scale
        sx = cx + (-sin_t * ry + cos_t * rx) / scale
        if field is not None:
            sy = sy + field[0]
            sx = sx + field[1]
        image = _fetch_bilinear(image, sy, sx).astype(np.float32)
        mask = (_fetch_nearest(mask, sy, sx) > 0).astype(np.uint8)

    if do_gamma:
        gamma = float(rng.uniform(config.gamma_min, config.gamma_max))
        if gamma != 1.0:
            image = (np.clip(image / 255.0, 0.0, 1.0) ** gamma * 255.0).astype(
                np.float32)

    return Sample(image=image, mask=mask, id=sample.id)


def _blob_field(rng, height: int, width: int):
    """Union mask and soft intensity profile of 1-3 random ellipses."""
    count = int(rng.integers(1, 4))
    total_area = float(rng.uniform(0.035, 0.16)) * height * width
    shares = rng.uniform(0.5, 1.0, size=count)
    shares = shares / shares.sum()
    mask = np.zeros((height, width), dtype=bool)
    soft = np.zeros((height, width))
    py, px = np.mgrid[0:height, 0:width]
    for share in shares:
        area = total_area * share
        aspect = float(rng.uniform(0.6, 1.6))
        semi_a = max(math.sqrt(area * aspect / math.pi), 2.0)
        semi_b = max(area / (math.pi * semi_a), 2.0)
        theta = float(rng.uniform(0, math.pi))
        cy = float(rng.uniform(0.2 * height, 0.8 * height))
        cx = float(rng.uniform(0.2 * width, 0.8 * width))
        dy, dx = py - cy, px - cx
        u = math.cos(theta) * dy + math.sin(theta) * dx
        v = -math.sin(theta) * dy + math.cos(theta) * dx
        d = np.sqrt((u / semi_b) ** 2 + (v / semi_a) ** 2)
        mask |= d <= 1.0
        soft = np.maximum(soft, 1.0 / (1.0 + np.exp((d - 1.0) * 10.0)))
    return mask, soft


def synth_polyp_dataset(n: int, height: int = 64, width: int = 64,
                        seed: int = 0) -> list:
    """Generate n image/mask samples: low-frequency background plus 1-3
    smooth-edged bright blobs; foreground fraction kept in [0.02, 0.25]
    (the class-imbalance regime). Deterministic per seed."""
    samples = []
    for i in range(n):
        rng = np.random.default_rng([seed, i])
        for _ in range(32):
            mask, soft = _blob_field(rng, height, width)
            if 0.02 <= mask.mean() <= 0.25:
                break
        base = float(rng.uniform(95, 140))
        lowfreq = _bilinear_resize(
            rng.normal(size=(5, 5, 1)), height, width)[..., 0] * float(
            rng.uniform(8, 20))
        channel_shift = rng.uniform(-10, 10, size=3)
        image = base + lowfreq[..., None] + channel_shift[None, None, :]
        tint = np.array([75.0, 40.0, 45.0]) + rng.uniform(-10, 10, size=3)
        image = image + soft[..., None] * tint[None, None, :]
        image = image + rng.normal(scale=5.0, size=(height, width, 3)) \
            * (0.4 + 0.6 * soft[..., None])
        image = np.clip(image, 0, 255).astype(np.float32)
        samples.append(Sample(image=image, mask=mask.astype(np.uint8),
                              id=f"synth_{i:04d}"))
    return samples
