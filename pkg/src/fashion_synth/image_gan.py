"""Stage two: per-category texture channels composed into the image.

The generator emits one RGB texture channel per label (7 x m x n x 3,
tanh-bounded), and :func:`compose` assembles the final image by routing
each pixel to the channel of its label:

    out[p] = sum_l mask_l[p] * channel_l[p]

Hard mode demands exact one-hot masks; soft mode (probability-weighted)
exists only for gradient tests. replace_head copies hair/face pixels
back from the source photo.
"""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

from .blocks import (
    Decoder,
    Encoder8,
    ScoreHead,
    SeedProjection,
    base_width,
    init_weights,
    tile_vector,
    to_chw,
    to_vec,
)
from .core_types import (
    DESIGN_DIM,
    DesignCoding,
    ImageRGB,
    LABELS,
    LatentNoise,
    NOISE_DIM,
    NUM_LABELS,
    SegMap,
    argmax_labels,
)
from .errors import NonOneHot, ShapeMismatch

HEAD_LABELS = (LABELS.index("hair"), LABELS.index("face"))


class ImageGenerator(nn.Module):
    def __init__(self, resolution: int):
        super().__init__()
        b = base_width(resolution)
        self.resolution = resolution
        self.project = SeedProjection(NOISE_DIM + DESIGN_DIM, 6 * b)
        self.encode_map = Encoder8(NUM_LABELS, 2 * b, resolution)
        self.decode = Decoder(8 * b, NUM_LABELS * 3, resolution)
        self.apply(init_weights)

    def forward(self, z: torch.Tensor, d: torch.Tensor,
                segmap: torch.Tensor) -> torch.Tensor:
        """(B,100), (B,50), (B,7,m,n) -> (B, 7, 3, m, n) in [-1,1]."""
        seed = torch.cat(
            [self.project(torch.cat([z, d], dim=1)), self.encode_map(segmap)],
            dim=1)
        raw = self.decode(seed)
        b, _, m, n = raw.shape
        return torch.tanh(raw).view(b, NUM_LABELS, 3, m, n)


class ImageDiscriminator(nn.Module):
    def __init__(self, resolution: int):
        super().__init__()
        b = base_width(resolution)
        self.resolution = resolution
        self.trunk = Encoder8(3 + NUM_LABELS, 8 * b, resolution,
                              discriminator=True)
        self.head = ScoreHead(8 * b + DESIGN_DIM)
        self.apply(init_weights)

    def forward(self, image: torch.Tensor, d: torch.Tensor,
                segmap: torch.Tensor) -> torch.Tensor:
        features = self.trunk(torch.cat([image, segmap], dim=1))
        return self.head(torch.cat([features, tile_vector(d)], dim=1))


def generate_texture_channels(z: LatentNoise, segmap: SegMap,
                              d: DesignCoding,
                              generator: ImageGenerator) -> np.ndarray:
    """Single-sample inference wrapper -> (7, m, n, 3) float64 array."""
    was_training = generator.training
    generator.eval()
    try:
        with torch.no_grad():
            channels = generator(to_vec(z.values), to_vec(d.values),
                                 to_chw(segmap.probs))
    finally:
        generator.train(was_training)
    # (1, 7, 3, m, n) -> (7, m, n, 3)
    return np.transpose(channels.squeeze(0).numpy().astype(np.float64),
                        (0, 2, 3, 1))


def discriminate_image(image: ImageRGB, segmap: SegMap, d: DesignCoding,
                       disc: ImageDiscriminator) -> float:
    was_training = disc.training
    disc.eval()
    try:
        with torch.no_grad():
            score = disc(to_chw(image.pixels), to_vec(d.values),
                         to_chw(segmap.probs))
    finally:
        disc.train(was_training)
    return float(score.item())


def _mask_array(masks) -> np.ndarray:
    if isinstance(masks, SegMap):
        return masks.probs
    return np.asarray(masks, dtype=np.float64)


def compose(channels: np.ndarray, masks, mode: str = "hard") -> ImageRGB:
    """Route each pixel to its label's texture channel.

    ``channels`` is (7, m, n, 3); ``masks`` is a SegMap or an (m, n, 7)
    array. Hard mode requires exact one-hot masks and realizes the
    indicator-sum composition; soft mode blends by probability.
    """
    if mode not in ("hard", "soft"):
        raise ValueError(f"unknown mode {mode!r}")
    channels = np.asarray(channels, dtype=np.float64)
    weights = _mask_array(masks)
    if channels.ndim != 4 or channels.shape[0] != NUM_LABELS or channels.shape[3] != 3:
        raise ShapeMismatch(f"channels must be (7, m, n, 3), got {channels.shape}")
    m, n = channels.shape[1:3]
    if weights.shape != (m, n, NUM_LABELS):
        raise ShapeMismatch(
            f"masks {weights.shape} do not match channels ({m}, {n}, {NUM_LABELS})")
    if mode == "hard" and not np.all((weights == 0.0) | (weights == 1.0)):
        raise NonOneHot("hard composition requires exact one-hot masks")
    # (m, n, 7) -> (7, m, n, 1), broadcast over RGB
    w = np.transpose(weights, (2, 0, 1))[..., np.newaxis]
    return ImageRGB(np.clip((w * channels).sum(axis=0), -1.0, 1.0))


def compose_torch(channels: torch.Tensor, masks: torch.Tensor) -> torch.Tensor:
    """Batched training-path composition: (B,7,3,m,n) x (B,7,m,n) -> (B,3,m,n)."""
    return (channels * masks.unsqueeze(2)).sum(dim=1)


def replace_head(generated: ImageRGB, original: ImageRGB,
                 original_map: SegMap) -> ImageRGB:
    """Copy hair/face pixels from the source photo into the generation."""
    if generated.pixels.shape != original.pixels.shape:
        raise ShapeMismatch("generated and original image sizes differ")
    if original_map.probs.shape[:2] != generated.pixels.shape[:2]:
        raise ShapeMismatch("map size differs from image size")
    labels = argmax_labels(original_map.probs)
    keep = np.isin(labels, HEAD_LABELS)[..., np.newaxis]
    return ImageRGB(np.where(keep, original.pixels, generated.pixels))
