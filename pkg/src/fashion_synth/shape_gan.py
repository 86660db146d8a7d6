"""Stage one: segmentation-map generator and its discriminator.

The generator turns (noise, spatial constraint, design coding) into a
full-resolution 7-class map under a per-pixel softmax, so every output
pixel lies on the probability simplex by construction. The discriminator
scores (map, constraint, design coding) triples.
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
    DESIGN_DIM,
    CONSTRAINT_SIZE,
    DesignCoding,
    LatentNoise,
    NOISE_DIM,
    NUM_CONSTRAINT_LABELS,
    NUM_LABELS,
    SegMap,
    SpatialConstraint,
    validate_segmap,
)


class ShapeGenerator(nn.Module):
    def __init__(self, resolution: int):
        super().__init__()
        b = base_width(resolution)
        self.resolution = resolution
        self.project = SeedProjection(NOISE_DIM + DESIGN_DIM, 6 * b)
        self.encode_constraint = SeedEncoder(NUM_CONSTRAINT_LABELS, 2 * b, b)
        self.decode = Decoder(8 * b, NUM_LABELS, resolution)
        self.apply(init_weights)

    def forward(self, z: torch.Tensor, d: torch.Tensor,
                constraint: torch.Tensor) -> torch.Tensor:
        """(B,100), (B,50), (B,4,8,8) -> per-pixel class probabilities."""
        seed = torch.cat(
            [self.project(torch.cat([z, d], dim=1)),
             self.encode_constraint(constraint)], dim=1)
        return torch.softmax(self.decode(seed), dim=1)


class ShapeDiscriminator(nn.Module):
    def __init__(self, resolution: int):
        super().__init__()
        b = base_width(resolution)
        self.resolution = resolution
        # the constraint rides along as extra input planes, upsampled to
        # full resolution; the design coding joins at the 8x8 features
        self.trunk = Encoder8(NUM_LABELS + NUM_CONSTRAINT_LABELS, 8 * b,
                              resolution, discriminator=True)
        self.head = ScoreHead(8 * b + DESIGN_DIM)
        self.apply(init_weights)

    def forward(self, segmap: torch.Tensor, d: torch.Tensor,
                constraint: torch.Tensor) -> torch.Tensor:
        scale = self.resolution // CONSTRAINT_SIZE
        grown = constraint.repeat_interleave(scale, dim=2).repeat_interleave(scale, dim=3)
        features = self.trunk(torch.cat([segmap, grown], dim=1))
        return self.head(torch.cat([features, tile_vector(d)], dim=1))


def _constraint_tensor(constraint: SpatialConstraint) -> torch.Tensor:
    return to_chw(constraint.probs)


def generate_shape(z: LatentNoise, constraint: SpatialConstraint,
                   d: DesignCoding, generator: ShapeGenerator) -> SegMap:
    """Single-sample inference wrapper producing a validated SegMap."""
    was_training = generator.training
    generator.eval()
    try:
        with torch.no_grad():
            probs = generator(to_vec(z.values), to_vec(d.values),
                              _constraint_tensor(constraint))
    finally:
        generator.train(was_training)
    arr = np.transpose(probs.squeeze(0).numpy().astype(np.float64), (1, 2, 0))
    arr = arr / arr.sum(axis=2, keepdims=True)
    return validate_segmap(arr)


def discriminate_shape(segmap: SegMap, constraint: SpatialConstraint,
                       d: DesignCoding, disc: ShapeDiscriminator) -> float:
    was_training = disc.training
    disc.eval()
    try:
        with torch.no_grad():
            score = disc(to_chw(segmap.probs), to_vec(d.values),
                         _constraint_tensor(constraint))
    finally:
        disc.train(was_training)
    return float(score.item())
