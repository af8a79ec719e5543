"""Targeted image augmentations: background swapping and stain color jitter.

Both operations rewrite nuisance content while preserving what carries the
label: copy_paste keeps the masked foreground and replaces everything else
with an empty background; stain_jitter perturbs colors along a fixed stain
basis with per-image scalars. Images are dense H x W x C arrays with values
in [0, 255]; operations are pure functions of (input, seed).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
from PIL import Image

from ._rng import RngLike, as_generator

COPY_PASTE_POLICIES = ("All", "SameY", "SameRegion")

# Widely used hematoxylin / eosin / DAB optical-density basis from the color
# deconvolution literature; rows are unit-normalized stain vectors.
DEFAULT_OD_MATRIX = np.array(
    [
        [0.65, 0.70, 0.29],
        [0.07, 0.99, 0.11],
        [0.27, 0.57, 0.78],
    ]
)


def _check_pixels(pixels: np.ndarray, name: str = "pixels") -> np.ndarray:
    arr = np.asarray(pixels, dtype=float)
    if arr.ndim != 3:
        raise ValueError(f"{name} must be an H x W x C array, got shape {arr.shape}")
    if arr.size and (arr.min() < 0 or arr.max() > 255):
        raise ValueError(f"{name} values must lie in [0, 255]")
    return arr


@dataclass(frozen=True)
class MaskedImage:
    """An image with a binary foreground mask and its annotations."""

    pixels: np.ndarray
    mask: np.ndarray
    label: str
    domain_id: int
    region_tag: str | None = None

    def __eq__(self, other) -> bool:
        if not isinstance(other, MaskedImage):
            return NotImplemented
        return (
            np.array_equal(self.pixels, other.pixels)
            and np.array_equal(self.mask, other.mask)
            and self.label == other.label
            and self.domain_id == other.domain_id
            and self.region_tag == other.region_tag
        )

    __hash__ = None

    def __post_init__(self) -> None:
        pixels = _check_pixels(self.pixels)
        mask = np.asarray(self.mask)
        if mask.shape != pixels.shape[:2]:
            raise ValueError(
                f"mask shape {mask.shape} does not match pixel grid {pixels.shape[:2]}"
            )
        if mask.size and not np.isin(mask, (0, 1)).all():
            raise ValueError("mask must be binary (0 or 1)")
        object.__setattr__(self, "pixels", pixels)
        object.__setattr__(self, "mask", mask.astype(np.uint8))


@dataclass(frozen=True)
class BackgroundPool:
    """Empty-labeled backgrounds, indexed for the selection policies.

    observed_labels maps a domain id to the set of labels ever recorded
    there, which is what the SameY policy filters on; it may cover domains
    beyond those contributing backgrounds.
    """

    backgrounds: tuple[MaskedImage, ...]
    empty_label: str = "empty"
    observed_labels: Mapping[int, frozenset[str]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "backgrounds", tuple(self.backgrounds))
        for bg in self.backgrounds:
            if bg.label != self.empty_label:
                raise ValueError(
                    f"pool entries must carry the empty label {self.empty_label!r}, "
                    f"got {bg.label!r}"
                )
        observed = {int(k): frozenset(v) for k, v in dict(self.observed_labels).items()}
        object.__setattr__(self, "observed_labels", observed)

    def by_domain(self, domain_id: int) -> list[MaskedImage]:
        return [bg for bg in self.backgrounds if bg.domain_id == domain_id]

    def by_region(self, region_tag: str | None) -> list[MaskedImage]:
        return [bg for bg in self.backgrounds if bg.region_tag == region_tag]

    def domains_observing(self, label: str) -> frozenset[int]:
        return frozenset(
            d for d, labels in self.observed_labels.items() if label in labels
        )


def _policy_candidates(
    example: MaskedImage, pool: BackgroundPool, policy: str
) -> list[MaskedImage]:
    if policy == "All":
        return list(pool.backgrounds)
    if policy == "SameY":
        domains = pool.domains_observing(example.label)
        return [bg for bg in pool.backgrounds if bg.domain_id in domains]
    if policy == "SameRegion":
        if example.region_tag is None:
            raise ValueError("SameRegion policy requires the example to carry a region_tag")
        return pool.by_region(example.region_tag)
    raise ValueError(f"policy must be one of {COPY_PASTE_POLICIES}, got {policy!r}")


def copy_paste(
    example: MaskedImage,
    pool: BackgroundPool,
    policy: str = "All",
    rng_stream: RngLike = 0,
) -> MaskedImage:
    """Paste the masked foreground onto a pool background.

    Empty-labeled examples and empty candidate pools pass through unchanged.
    The background is drawn uniformly from the policy-filtered pool; the
    label, mask, and annotations of the example are carried over.
    """
    if example.label == pool.empty_label:
        return example
    candidates = _policy_candidates(example, pool, policy)
    if not candidates:
        return example
    rng = as_generator(rng_stream)
    background = candidates[int(rng.integers(len(candidates)))]
    if background.pixels.shape != example.pixels.shape:
        raise ValueError(
            f"background shape {background.pixels.shape} does not match "
            f"example shape {example.pixels.shape}"
        )
    mask = example.mask[:, :, None].astype(float)
    pixels = mask * example.pixels + (1.0 - mask) * background.pixels
    return replace(example, pixels=pixels)


@dataclass(frozen=True)
class StainBasis:
    """Stain vectors in optical-density space plus the jitter strength."""

    od_matrix: np.ndarray | None = None
    epsilon: float = 1e-6
    strength: float = 0.05

    def __post_init__(self) -> None:
        matrix = DEFAULT_OD_MATRIX if self.od_matrix is None else np.asarray(
            self.od_matrix, dtype=float
        )
        if matrix.shape != (3, 3):
            raise ValueError(f"od_matrix must be 3 x 3, got shape {matrix.shape}")
        cond = np.linalg.cond(matrix)
        if not np.isfinite(cond) or cond > 1.0 / np.finfo(float).eps:
            raise ValueError("od_matrix must be invertible")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if not self.strength >= 0:
            raise ValueError(f"strength must be nonnegative, got {self.strength}")
        object.__setattr__(self, "od_matrix", matrix)

    @property
    def inverse(self) -> np.ndarray:
        return np.linalg.inv(self.od_matrix)


def stain_jitter(
    image: np.ndarray,
    basis: StainBasis,
    rng_stream: RngLike = 0,
    alpha: float | None = None,
    beta: float | None = None,
) -> np.ndarray:
    """Perturb stain concentrations with per-image scalars.

    Pixels are mapped to stain space through the basis, scaled by
    alpha ~ Uni(1 - strength, 1 + strength) and shifted by
    beta ~ Uni(-strength, strength), mapped back, and clipped to [0, 255].
    Passing alpha/beta explicitly bypasses the draws (test hook); with
    alpha = 1, beta = 0 the transform is the identity up to epsilon.
    """
    arr = _check_pixels(image, "image")
    if arr.shape[2] != 3:
        raise ValueError(f"stain_jitter expects 3 channels, got {arr.shape[2]}")
    if alpha is None or beta is None:
        rng = as_generator(rng_stream)
        drawn_alpha = rng.uniform(1.0 - basis.strength, 1.0 + basis.strength)
        drawn_beta = rng.uniform(-basis.strength, basis.strength)
        alpha = drawn_alpha if alpha is None else alpha
        beta = drawn_beta if beta is None else beta
    stains = -np.log(arr + basis.epsilon) @ basis.inverse
    perturbed = np.exp(-(alpha * stains + beta) @ basis.od_matrix) - basis.epsilon
    return np.clip(perturbed, 0.0, 255.0)


def hue_jitter(image: np.ndarray, strength: float, rng_stream: RngLike = 0) -> np.ndarray:
    """Channel-wise affine color perturbation, drawn once per image.

    Each channel gets a gain in [1 - strength, 1 + strength] and an offset
    in [-strength, strength] scaled to the pixel range; strength 0 is the
    identity. Output is clipped to [0, 255].
    """
    if strength < 0:
        raise ValueError(f"strength must be nonnegative, got {strength}")
    arr = _check_pixels(image, "image")
    channels = arr.shape[2]
    rng = as_generator(rng_stream)
    gain = rng.uniform(1.0 - strength, 1.0 + strength, size=channels)
    offset = rng.uniform(-strength, strength, size=channels) * 255.0
    return np.clip(arr * gain + offset, 0.0, 255.0)


def read_png(path) -> np.ndarray:
    """Load an image as a float array in [0, 255] (grayscale gains an axis)."""
    with Image.open(path) as img:
        arr = np.asarray(img, dtype=float)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return arr


def write_png(image: np.ndarray, path) -> None:
    arr = np.asarray(image)
    data = np.clip(np.rint(arr), 0, 255).astype(np.uint8)
    if data.ndim == 3 and data.shape[2] == 1:
        data = data[:, :, 0]
    Image.fromarray(data).save(path, format="PNG")


def read_mask_csv(path) -> np.ndarray:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = [[int(cell) for cell in row] for row in csv.reader(fh) if row]
    return np.array(rows, dtype=np.uint8)


def write_mask_csv(mask: np.ndarray, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        for row in np.asarray(mask, dtype=int):
            writer.writerow(list(row))
