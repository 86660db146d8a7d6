"""Shared convolutional building blocks for all generators/discriminators.

Every network in this package is built from the same three pieces: a
6-layer transposed-convolution decoder growing an 8x8 seed to the output
resolution, a strided convolution encoder shrinking an input to an 8x8
feature map, and a linear projection lifting (z || d) to an 8x8 seed.
Layer widths scale with resolution through :func:`base_width`.
"""

from __future__ import annotations

import math

import numpy as np
import torch
from torch import nn

SEED_SIZE = 8          # spatial size where conditioning is injected
DECODER_LAYERS = 6
ENCODER_LAYERS = 5     # conv layers before a discriminator's scoring head


def base_width(resolution: int) -> int:
    """Channel multiplier b: 64 at 128x128, halved per octave below."""
    widths = {128: 64, 64: 32, 32: 16}
    if resolution not in widths:
        raise ValueError(f"unsupported resolution {resolution}")
    return widths[resolution]


def up_stride_plan(resolution: int) -> list:
    """Strides for the 6 decoder layers; doublings first, 8 -> resolution."""
    doublings = int(math.log2(resolution // SEED_SIZE))
    if SEED_SIZE * 2 ** doublings != resolution or doublings > DECODER_LAYERS:
        raise ValueError(f"cannot reach {resolution} from {SEED_SIZE}")
    return [2] * doublings + [1] * (DECODER_LAYERS - doublings)


def down_stride_plan(resolution: int) -> list:
    """Strides for the 5 encoder layers; halvings first, resolution -> 8."""
    halvings = int(math.log2(resolution // SEED_SIZE))
    if halvings > ENCODER_LAYERS:
        raise ValueError(f"cannot reach {SEED_SIZE} from {resolution}")
    return [2] * halvings + [1] * (ENCODER_LAYERS - halvings)


def decoder_widths(b: int) -> list:
    """Feature widths entering the 6 decoder layers: b*{8, 8, 4, 2, 1, 1}."""
    return [8 * b, 8 * b, 4 * b, 2 * b, b, b]


def encoder_widths(b: int) -> list:
    """Feature widths leaving the 5 encoder layers: b*{1, 2, 4, 8, 8}."""
    return [b, 2 * b, 4 * b, 8 * b, 8 * b]


def init_weights(module: nn.Module) -> None:
    """DCGAN-style init: conv weights N(0, 0.02), norm layers N(1, 0.02)."""
    name = module.__class__.__name__
    if "Conv" in name and hasattr(module, "weight"):
        nn.init.normal_(module.weight, 0.0, 0.02)
        if module.bias is not None:
            nn.init.zeros_(module.bias)
    elif "BatchNorm" in name:
        nn.init.normal_(module.weight, 1.0, 0.02)
        nn.init.zeros_(module.bias)
    elif isinstance(module, nn.Linear):
        nn.init.normal_(module.weight, 0.0, 0.02)
        nn.init.zeros_(module.bias)


class Decoder(nn.Module):
    """8x8 seed -> (out_channels, resolution, resolution) raw logits.

    The caller applies the output nonlinearity (softmax or tanh), so the
    head itself carries no activation.
    """

    def __init__(self, in_channels: int, out_channels: int, resolution: int):
        super().__init__()
        b = base_width(resolution)
        widths = decoder_widths(b)
        if in_channels != widths[0]:
            raise ValueError(f"decoder expects {widths[0]} input channels")
        strides = up_stride_plan(resolution)
        outs = widths[1:] + [out_channels]
        layers = []
        c_in = in_channels
        for i, (stride, c_out) in enumerate(zip(strides, outs)):
            k, pad = (4, 1) if stride == 2 else (3, 1)
            layers.append(nn.ConvTranspose2d(c_in, c_out, k, stride, pad))
            if i < DECODER_LAYERS - 1:
                layers.append(nn.BatchNorm2d(c_out))
                layers.append(nn.ReLU(inplace=True))
            c_in = c_out
        self.net = nn.Sequential(*layers)
        self.resolution = resolution
        self.out_channels = out_channels

    @property
    def head(self) -> nn.ConvTranspose2d:
        """The final (activation-free) layer; tests zero it to probe heads."""
        return self.net[-1]

    def forward(self, seed: torch.Tensor) -> torch.Tensor:
        return self.net(seed)


class Encoder8(nn.Module):
    """(in_channels, resolution, resolution) -> (out_channels, 8, 8).

    Used both as a conditioning encoder inside generators (batch norm,
    ReLU) and as the feature trunk of discriminators (no norm on the
    first layer, LeakyReLU), selected by ``discriminator``.
    """

    def __init__(self, in_channels: int, out_channels: int, resolution: int,
                 discriminator: bool = False):
        super().__init__()
        b = base_width(resolution)
        widths = encoder_widths(b)
        widths[-1] = out_channels
        strides = down_stride_plan(resolution)
        layers = []
        c_in = in_channels
        for i, (stride, c_out) in enumerate(zip(strides, widths)):
            k, pad = (4, 1) if stride == 2 else (3, 1)
            layers.append(nn.Conv2d(c_in, c_out, k, stride, pad))
            if not (discriminator and i == 0):
                layers.append(nn.BatchNorm2d(c_out))
            layers.append(nn.LeakyReLU(0.2, inplace=True) if discriminator
                          else nn.ReLU(inplace=True))
            c_in = c_out
        self.net = nn.Sequential(*layers)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x)


class SeedProjection(nn.Module):
    """Linear lift of a flat conditioning vector to an 8x8 feature block."""

    def __init__(self, in_dim: int, out_channels: int):
        super().__init__()
        self.out_channels = out_channels
        self.fc = nn.Linear(in_dim, out_channels * SEED_SIZE * SEED_SIZE)
        self.norm = nn.BatchNorm2d(out_channels)

    def forward(self, v: torch.Tensor) -> torch.Tensor:
        seed = self.fc(v).view(-1, self.out_channels, SEED_SIZE, SEED_SIZE)
        return torch.relu(self.norm(seed))


class ScoreHead(nn.Module):
    """1x1 mixing layer, then a valid 8x8 convolution to one probability.

    Discriminator heads receive content features concatenated with a
    tiled condition vector. The 1x1 convolution plus nonlinearity lets
    the score depend on products of the two, which a single linear
    collapse cannot express; without it a conditional discriminator can
    only apply a condition-independent bias and never learns whether
    content and condition agree.
    """

    def __init__(self, in_channels: int):
        super().__init__()
        self.net = nn.Sequential(
            nn.Conv2d(in_channels, in_channels, 1),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(in_channels, 1, SEED_SIZE),
        )

    @property
    def conv(self) -> nn.Conv2d:
        """The final collapsing layer; tests zero it to probe the sigmoid."""
        return self.net[-1]

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.net(features)).view(-1)


class SeedEncoder(nn.Module):
    """Two-layer conv stack over an input already at the 8x8 seed size."""

    def __init__(self, in_channels: int, out_channels: int, hidden: int):
        super().__init__()
        self.net = nn.Sequential(
            nn.Conv2d(in_channels, hidden, 3, 1, 1),
            nn.BatchNorm2d(hidden),
            nn.ReLU(inplace=True),
            nn.Conv2d(hidden, out_channels, 3, 1, 1),
            nn.BatchNorm2d(out_channels),
            nn.ReLU(inplace=True),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x)


def tile_vector(v: torch.Tensor, size: int = SEED_SIZE) -> torch.Tensor:
    """(B, n) -> (B, n, size, size) by spatial repetition."""
    return v.view(*v.shape, 1, 1).expand(*v.shape, size, size)


def to_chw(arr: np.ndarray) -> torch.Tensor:
    """(m, n, c) float array -> (1, c, m, n) float32 tensor."""
    chw = np.ascontiguousarray(np.transpose(np.asarray(arr, dtype=np.float32), (2, 0, 1)))
    return torch.from_numpy(chw).unsqueeze(0)


def from_chw(tensor: torch.Tensor) -> np.ndarray:
    """(1, c, m, n) or (c, m, n) tensor -> (m, n, c) float64 array."""
    t = tensor.detach()
    if t.dim() == 4:
        t = t.squeeze(0)
    return np.transpose(t.cpu().numpy().astype(np.float64), (1, 2, 0))


def to_vec(arr: np.ndarray) -> torch.Tensor:
    """Flat float array -> (1, n) float32 tensor."""
    return torch.from_numpy(np.asarray(arr, dtype=np.float32)).view(1, -1)
