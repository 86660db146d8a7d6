"""Conditioning inputs derived from a PersonRecord.

The spatial constraint is the merged (4-class) segmentation map
bicubic-downsampled to 8x8; the design coding concatenates 10 human
attribute dims with the 40-dim encoded caption. All functions here are
pure and operate on immutable inputs, so batch preprocessing can run in
parallel.
"""

from __future__ import annotations

import warnings

import numpy as np

from .core_types import (
    ATTRIBUTE_DIM,
    CONSTRAINT_SIZE,
    DesignCoding,
    NUM_CONSTRAINT_LABELS,
    NUM_LABELS,
    PersonRecord,
    SKIN_LABELS,
    SegMap,
    SpatialConstraint,
    TEXT_DIM,
    argmax_labels,
)
from .errors import EmptySkinRegion, LengthMismatch, ShapeMismatch, TooSmall

#: Standard luma weights used for the gray skin dim.
LUMA_WEIGHTS = (0.299, 0.587, 0.114)


def merge_labels(segmap: SegMap) -> np.ndarray:
    """Collapse the four clothing/body classes into a generic "rest" channel.

    Channels background, hair and face pass through; upper-clothes,
    pants/shorts, legs and arms are summed into channel 3. Per-pixel
    probability mass is conserved.
    """
    p = segmap.probs
    if p.shape[2] != NUM_LABELS:
        raise ShapeMismatch(f"expected {NUM_LABELS} channels, got {p.shape[2]}")
    merged = np.empty(p.shape[:2] + (NUM_CONSTRAINT_LABELS,), dtype=np.float64)
    merged[..., 0] = p[..., 0]
    merged[..., 1] = p[..., 1]
    merged[..., 2] = p[..., 2]
    merged[..., 3] = p[..., 3] + p[..., 4] + p[..., 5] + p[..., 6]
    return merged


def _keys_kernel(t: np.ndarray, a: float = -0.5) -> np.ndarray:
    """Cubic convolution kernel (Catmull-Rom for a = -0.5)."""
    t = np.abs(t)
    t2, t3 = t * t, t * t * t
    out = np.where(
        t <= 1.0,
        (a + 2.0) * t3 - (a + 3.0) * t2 + 1.0,
        np.where(t < 2.0, a * t3 - 5.0 * a * t2 + 8.0 * a * t - 4.0 * a, 0.0),
    )
    return out


def bicubic_weight_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Row-normalized bicubic resampling weights along one axis.

    When downsampling, the kernel is widened by the scale factor so the
    output averages over the source footprint instead of point-sampling
    it. Taps falling outside the raster accumulate onto the edge pixels.
    Each row sums to exactly 1, so constants are reproduced exactly.
    """
    scale = n_in / n_out
    width = max(scale, 1.0)
    w = np.zeros((n_out, n_in), dtype=np.float64)
    for j in range(n_out):
        x = (j + 0.5) * scale - 0.5
        lo = int(np.floor(x - 2.0 * width)) + 1
        hi = int(np.floor(x + 2.0 * width))
        taps = np.arange(lo, hi + 1)
        vals = _keys_kernel((taps - x) / width)
        cols = np.clip(taps, 0, n_in - 1)
        np.add.at(w[j], cols, vals)
        w[j] /= w[j].sum()
    return w


def downsample_bicubic(arr: np.ndarray, size: int = CONSTRAINT_SIZE) -> np.ndarray:
    """Bicubic-resample each channel of an (m, n, C) map to (size, size, C).

    Output entries are clamped to [0, 1] and per-pixel channel vectors
    are renormalized to sum 1, preserving the simplex property of the
    input maps.
    """
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim != 3:
        raise ShapeMismatch(f"expected rank-3 array, got shape {arr.shape}")
    m, n, _ = arr.shape
    if m < size or n < size:
        raise TooSmall(f"input {m}x{n} smaller than target {size}x{size}")
    wr = bicubic_weight_matrix(m, size)
    wc = bicubic_weight_matrix(n, size)
    out = np.einsum("im,mnc,jn->ijc", wr, arr, wc, optimize=True)
    out = np.clip(out, 0.0, 1.0)
    sums = out.sum(axis=2, keepdims=True)
    out = np.divide(out, sums, out=np.zeros_like(out), where=sums > 0)
    return out


def build_spatial_constraint(record: PersonRecord) -> SpatialConstraint:
    """Merge then downsample the record's segmentation map to 8x8x4."""
    return SpatialConstraint(downsample_bicubic(merge_labels(record.segmap)))


def extract_attributes(record: PersonRecord) -> np.ndarray:
    """The 10 human-attribute dims of the design coding.

    Layout: [gender, long_hair, sunglasses, hat, skin_R, skin_G, skin_B,
    skin_Y, height_frac, width_frac]. Skin dims are per-channel medians
    over skin pixels (face, arms, legs) mapped to [0, 1]; Y is the luma
    of that median RGB. Size dims are the non-background bounding box
    extent as a fraction of the raster.
    """
    out = np.zeros(ATTRIBUTE_DIM, dtype=np.float64)
    out[:4] = record.attributes.as_flags()

    labels = argmax_labels(record.segmap)
    skin_mask = np.isin(labels, SKIN_LABELS)
    if not skin_mask.any():
        warnings.warn("record has no skin pixels; skin dims default to 0.5",
                      EmptySkinRegion)
        out[4:8] = 0.5
    else:
        px01 = (record.image.pixels + 1.0) / 2.0
        med = np.median(px01[skin_mask], axis=0)
        out[4:7] = med
        out[7] = float(np.dot(LUMA_WEIGHTS, med))

    fg_rows = np.nonzero((labels != 0).any(axis=1))[0]
    fg_cols = np.nonzero((labels != 0).any(axis=0))[0]
    if fg_rows.size:
        out[8] = (fg_rows[-1] - fg_rows[0] + 1) / labels.shape[0]
        out[9] = (fg_cols[-1] - fg_cols[0] + 1) / labels.shape[1]
    return out


def build_design_coding(record: PersonRecord, text_vec: np.ndarray) -> DesignCoding:
    """Concatenate the record's attribute dims with the encoded caption."""
    text_vec = np.asarray(text_vec, dtype=np.float64)
    if text_vec.shape != (TEXT_DIM,):
        raise LengthMismatch(f"text vector must have length {TEXT_DIM}, got {text_vec.shape}")
    return DesignCoding(np.concatenate([extract_attributes(record), text_vec]))
