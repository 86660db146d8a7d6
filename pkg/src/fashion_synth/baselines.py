"""Comparison models sharing the main networks' layer budget.

One-Step-8-7 / One-Step-8-4 collapse the pipeline into a single
generator fed an 8x8 label prior (unmerged 7-channel vs merged
4-channel) and render the image directly. Non-Compositional keeps the
two-stage wiring but swaps the per-category channels for one plain RGB
head. Training uses the same loop and losses as the main models, so
comparisons isolate architecture.
"""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

from .blocks import (
    Decoder,
    Encoder8,
    ScoreHead,
    SeedEncoder,
    SeedProjection,
    base_width,
    init_weights,
    tile_vector,
    to_chw,
    to_vec,
)
from .core_types import (
    NUM_CONSTRAINT_LABELS,
    CONSTRAINT_SIZE,
    DESIGN_DIM,
    DesignCoding,
    ImageRGB,
    LatentNoise,
    NOISE_DIM,
    NUM_LABELS,
    SegMap,
)
from .errors import PriorShapeMismatch
from .preprocess import downsample_bicubic

ONE_STEP_VARIANTS = {"8-7": NUM_LABELS, "8-4": NUM_CONSTRAINT_LABELS}


def unmerged_prior(segmap: SegMap) -> np.ndarray:
    """8x8x7 prior for One-Step-8-7: downsampled, all classes kept."""
    return downsample_bicubic(segmap.probs, CONSTRAINT_SIZE)


class OneStepGenerator(nn.Module):
    """Direct (z, prior, d) -> image generator, no intermediate map."""

    def __init__(self, resolution: int, variant: str):
        super().__init__()
        if variant not in ONE_STEP_VARIANTS:
            raise ValueError(f"unknown one-step variant {variant!r}")
        b = base_width(resolution)
        self.resolution = resolution
        self.variant = variant
        self.prior_channels = ONE_STEP_VARIANTS[variant]
        self.project = SeedProjection(NOISE_DIM + DESIGN_DIM, 6 * b)
        self.encode_prior = SeedEncoder(self.prior_channels, 2 * b, b)
        self.decode = Decoder(8 * b, 3, resolution)
        self.apply(init_weights)

    def forward(self, z: torch.Tensor, d: torch.Tensor,
                prior: torch.Tensor) -> torch.Tensor:
        seed = torch.cat(
            [self.project(torch.cat([z, d], dim=1)), self.encode_prior(prior)],
            dim=1)
        return torch.tanh(self.decode(seed))


class OneStepDiscriminator(nn.Module):
    """Scores (image, prior, d); the prior joins tiled at the 8x8 features."""

    def __init__(self, resolution: int, variant: str):
        super().__init__()
        if variant not in ONE_STEP_VARIANTS:
            raise ValueError(f"unknown one-step variant {variant!r}")
        b = base_width(resolution)
        self.resolution = resolution
        self.variant = variant
        self.prior_channels = ONE_STEP_VARIANTS[variant]
        self.trunk = Encoder8(3 + self.prior_channels, 8 * b, resolution,
                              discriminator=True)
        self.head = ScoreHead(8 * b + DESIGN_DIM)
        self.apply(init_weights)

    def forward(self, image: torch.Tensor, d: torch.Tensor,
                prior: torch.Tensor) -> torch.Tensor:
        scale = self.resolution // CONSTRAINT_SIZE
        grown = prior.repeat_interleave(scale, dim=2).repeat_interleave(scale, dim=3)
        features = self.trunk(torch.cat([image, grown], dim=1))
        return self.head(torch.cat([features, tile_vector(d)], dim=1))


class NonCompositionalGenerator(nn.Module):
    """image_gan wiring with a single 3-channel head instead of 7 channels."""

    def __init__(self, resolution: int):
        super().__init__()
        b = base_width(resolution)
        self.resolution = resolution
        self.project = SeedProjection(NOISE_DIM + DESIGN_DIM, 6 * b)
        self.encode_map = Encoder8(NUM_LABELS, 2 * b, resolution)
        self.decode = Decoder(8 * b, 3, resolution)
        self.apply(init_weights)

    def forward(self, z: torch.Tensor, d: torch.Tensor,
                segmap: torch.Tensor) -> torch.Tensor:
        seed = torch.cat(
            [self.project(torch.cat([z, d], dim=1)), self.encode_map(segmap)],
            dim=1)
        return torch.tanh(self.decode(seed))


def _prior_tensor(prior: np.ndarray, expected_channels: int) -> torch.Tensor:
    prior = np.asarray(prior, dtype=np.float64)
    want = (CONSTRAINT_SIZE, CONSTRAINT_SIZE, expected_channels)
    if prior.shape != want:
        raise PriorShapeMismatch(f"prior shape {prior.shape}, expected {want}")
    return to_chw(prior)


def one_step_generate(z: LatentNoise, prior: np.ndarray, d: DesignCoding,
                      generator: OneStepGenerator) -> ImageRGB:
    prior_t = _prior_tensor(prior, generator.prior_channels)
    was_training = generator.training
    generator.eval()
    try:
        with torch.no_grad():
            img = generator(to_vec(z.values), to_vec(d.values), prior_t)
    finally:
        generator.train(was_training)
    arr = np.transpose(img.squeeze(0).numpy().astype(np.float64), (1, 2, 0))
    return ImageRGB(arr)


def noncomp_generate(z: LatentNoise, segmap: SegMap, d: DesignCoding,
                     generator: NonCompositionalGenerator) -> ImageRGB:
    was_training = generator.training
    generator.eval()
    try:
        with torch.no_grad():
            img = generator(to_vec(z.values), to_vec(d.values),
                            to_chw(segmap.probs))
    finally:
        generator.train(was_training)
    arr = np.transpose(img.squeeze(0).numpy().astype(np.float64), (1, 2, 0))
    return ImageRGB(arr)


def parameter_count(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())
