"""Array-backed domain types shared by every stage of the pipeline.

Conventions:

* Images live in ``[-1, 1]`` internally (the generators end in tanh);
  file I/O converts from 8-bit ``[0, 255]``.
* Segmentation maps are per-pixel probability vectors over the 7 labels
  in :data:`LABELS`, in that exact order.
* All domain objects are immutable after construction: the backing numpy
  arrays are marked read-only, so instances are safe to share across
  concurrent readers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NegativeEntry, NonSimplex, ShapeMismatch

#: Segmentation label order. Index into the channel axis of a SegMap.
LABELS = ("background", "hair", "face", "upper-clothes", "pants/shorts", "legs", "arms")
NUM_LABELS = len(LABELS)

#: Merged label order used by the low-resolution spatial constraint.
CONSTRAINT_LABELS = ("background", "hair", "face", "rest")
NUM_CONSTRAINT_LABELS = len(CONSTRAINT_LABELS)

#: Spatial constraint raster size (height = width).
CONSTRAINT_SIZE = 8

#: Length of the design coding and its two slices.
DESIGN_DIM = 50
ATTRIBUTE_DIM = 10
TEXT_DIM = 40

#: Latent noise dimensionality for both generators.
NOISE_DIM = 100

#: Default output resolution.
DEFAULT_RESOLUTION = 128

#: Tolerance for the per-pixel simplex constraint.
SIMPLEX_TOL = 1e-5

LABEL_INDEX = {name: i for i, name in enumerate(LABELS)}
HAIR, FACE = LABEL_INDEX["hair"], LABEL_INDEX["face"]
#: Labels whose pixels count as skin when extracting the skin color dims.
SKIN_LABELS = (LABEL_INDEX["face"], LABEL_INDEX["legs"], LABEL_INDEX["arms"])


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class ImageRGB:
    """An RGB raster with values in ``[-1, 1]``."""

    pixels: np.ndarray  # (m, n, 3) float

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ShapeMismatch(f"expected (m, n, 3), got {px.shape}")
        if not np.all(np.isfinite(px)):
            raise ValueError("image contains non-finite values")
        if px.min() < -1.0 or px.max() > 1.0:
            raise ValueError(
                f"image values outside [-1, 1]: min={px.min():.4g} max={px.max():.4g}"
            )
        object.__setattr__(self, "pixels", _freeze(px))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @classmethod
    def from_uint8(cls, raw: np.ndarray) -> "ImageRGB":
        """Convert an 8-bit ``[0, 255]`` raster to the internal range."""
        return cls(np.asarray(raw, dtype=np.float64) / 127.5 - 1.0)

    def to_uint8(self) -> np.ndarray:
        return np.clip((self.pixels + 1.0) * 127.5, 0, 255).round().astype(np.uint8)


@dataclass(frozen=True)
class SegMap:
    """Per-pixel probability map over the 7 labels in :data:`LABELS`.

    Every pixel's channel vector is non-negative and sums to 1 within
    :data:`SIMPLEX_TOL`. Use :func:`validate_segmap` to construct one
    from an untrusted array.
    """

    probs: np.ndarray  # (m, n, 7) float
    labels: tuple = field(default=LABELS)

    def __post_init__(self):
        if tuple(self.labels) != LABELS:
            raise ValueError(f"label order must be {LABELS}")
        object.__setattr__(self, "probs", _freeze(self.probs))

    @property
    def height(self) -> int:
        return self.probs.shape[0]

    @property
    def width(self) -> int:
        return self.probs.shape[1]


@dataclass(frozen=True)
class SpatialConstraint:
    """8x8 merged soft map over :data:`CONSTRAINT_LABELS` conditioning stage one."""

    probs: np.ndarray  # (8, 8, 4) float

    def __post_init__(self):
        p = np.asarray(self.probs)
        expected = (CONSTRAINT_SIZE, CONSTRAINT_SIZE, NUM_CONSTRAINT_LABELS)
        if p.shape != expected:
            raise ShapeMismatch(f"expected {expected}, got {p.shape}")
        if p.min() < 0:
            raise NegativeEntry(f"negative entry {p.min():.4g}")
        sums = p.sum(axis=2)
        dev = np.abs(sums - 1.0).max()
        if dev > SIMPLEX_TOL:
            raise NonSimplex(f"pixel sums deviate from 1 by up to {dev:.4g}")
        object.__setattr__(self, "probs", _freeze(p))


@dataclass(frozen=True)
class DesignCoding:
    """The 50-dim condition vector: 10 attribute dims then 40 text dims.

    Attribute layout: [gender, long_hair, sunglasses, hat, skin_R, skin_G,
    skin_B, skin_Y, height_frac, width_frac]. The first four are exactly
    binary; the rest lie in [0, 1]. Text dims are unconstrained reals.
    """

    values: np.ndarray  # (50,) float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (DESIGN_DIM,):
            raise ShapeMismatch(f"expected ({DESIGN_DIM},), got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("design coding contains non-finite values")
        flags = v[:4]
        if not np.all((flags == 0.0) | (flags == 1.0)):
            raise ValueError(f"binary attribute dims must be 0 or 1, got {flags}")
        soft = v[4:ATTRIBUTE_DIM]
        if soft.min() < 0.0 or soft.max() > 1.0:
            raise ValueError("skin/size dims must lie in [0, 1]")
        object.__setattr__(self, "values", _freeze(v))

    @property
    def attributes(self) -> np.ndarray:
        return self.values[:ATTRIBUTE_DIM]

    @property
    def text(self) -> np.ndarray:
        return self.values[ATTRIBUTE_DIM:]


@dataclass(frozen=True)
class LatentNoise:
    """A 100-dim latent vector, nominally standard Gaussian."""

    values: np.ndarray  # (100,) float
    seed: int | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (NOISE_DIM,):
            raise ShapeMismatch(f"expected ({NOISE_DIM},), got {v.shape}")
        object.__setattr__(self, "values", _freeze(v))

    @classmethod
    def draw(cls, seed: int | None = None,
             rng: np.random.Generator | None = None) -> "LatentNoise":
        """Sample from the standard Gaussian, deterministically under a seed."""
        if rng is None:
            rng = np.random.default_rng(seed)
        return cls(rng.standard_normal(NOISE_DIM), seed=seed)


@dataclass(frozen=True)
class Attributes:
    """Human attribute flags carried by a training record.

    ``gender`` is True for female (it becomes "lady" in captions and
    the 1.0 value of design-coding dim 0).
    """

    gender: bool = False
    long_hair: bool = False
    sunglasses: bool = False
    hat: bool = False

    def as_flags(self) -> np.ndarray:
        return np.array(
            [self.gender, self.long_hair, self.sunglasses, self.hat],
            dtype=np.float64,
        )


@dataclass(frozen=True)
class PersonRecord:
    """One training sample: a photo, its segmentation, a caption, and flags."""

    image: ImageRGB
    segmap: SegMap
    caption: str
    attributes: Attributes
    record_id: str = ""

    def __post_init__(self):
        if (self.image.height, self.image.width) != (self.segmap.height, self.segmap.width):
            raise ShapeMismatch(
                f"image {self.image.pixels.shape[:2]} and segmap "
                f"{self.segmap.probs.shape[:2]} disagree"
            )
        if not self.caption:
            raise ValueError("caption must be non-empty")


def validate_segmap(probs: np.ndarray) -> SegMap:
    """Check the per-pixel simplex constraint and wrap the array.

    Raises :class:`ShapeMismatch` if the array is not (m, n, 7),
    :class:`NegativeEntry` if any entry is below zero, and
    :class:`NonSimplex` if any pixel's channel sum deviates from 1 by
    more than :data:`SIMPLEX_TOL`.
    """
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 3 or p.shape[2] != NUM_LABELS:
        raise ShapeMismatch(f"expected (m, n, {NUM_LABELS}), got {p.shape}")
    if not np.all(np.isfinite(p)):
        raise NonSimplex("segmentation map contains non-finite values")
    if p.min() < 0:
        idx = np.unravel_index(np.argmin(p), p.shape)
        raise NegativeEntry(f"negative entry {p.min():.4g} at {idx}")
    sums = p.sum(axis=2)
    dev = np.abs(sums - 1.0)
    if dev.max() > SIMPLEX_TOL:
        idx = np.unravel_index(np.argmax(dev), dev.shape)
        raise NonSimplex(
            f"pixel {idx} channels sum to {sums[idx]:.6f} (tolerance {SIMPLEX_TOL})"
        )
    return SegMap(p)


def argmax_labels(segmap) -> np.ndarray:
    """Per-pixel index of the maximum channel; ties break toward the lowest index.

    Accepts a :class:`SegMap` or a raw (m, n, C) array.
    """
    probs = segmap.probs if isinstance(segmap, SegMap) else np.asarray(segmap)
    return np.argmax(probs, axis=2)


def one_hot_map(labels: np.ndarray, num_classes: int = NUM_LABELS) -> np.ndarray:
    """Expand an integer label grid to a one-hot (m, n, num_classes) array."""
    labels = np.asarray(labels)
    if labels.min() < 0 or labels.max() >= num_classes:
        raise ValueError(f"labels outside [0, {num_classes})")
    out = np.zeros(labels.shape + (num_classes,), dtype=np.float64)
    np.put_along_axis(out, labels[..., None], 1.0, axis=-1)
    return out
