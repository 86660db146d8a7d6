import numpy as np
import pytest
import torch
from torch import nn

from fashion_synth.blocks import (
    base_width,
    Decoder,
    decoder_widths,
    down_stride_plan,
    Encoder8,
    encoder_widths,
    from_chw,
    ScoreHead,
    SeedEncoder,
    SeedProjection,
    tile_vector,
    to_chw,
    up_stride_plan,
)


def test_base_width_halves_per_octave():
    assert base_width(128) == 64
    assert base_width(64) == 32
    assert base_width(32) == 16
    with pytest.raises(ValueError):
        base_width(16)


def test_stride_plans_reach_target():
    for r in (32, 64, 128):
        up = up_stride_plan(r)
        assert len(up) == 6
        assert 8 * int(np.prod(up)) == r
        down = down_stride_plan(r)
        assert len(down) == 5
        assert r // int(np.prod(down)) == 8


def test_width_tables():
    assert decoder_widths(16) == [128, 128, 64, 32, 16, 16]
    assert encoder_widths(16) == [16, 32, 64, 128, 128]


@pytest.mark.parametrize("resolution", [32, 64, 128])
def test_decoder_output_shape(resolution):
    b = base_width(resolution)
    dec = Decoder(8 * b, 7, resolution)
    out = dec(torch.zeros(2, 8 * b, 8, 8))
    assert out.shape == (2, 7, resolution, resolution)


def test_decoder_head_hook_zeroes_logits():
    dec = Decoder(128, 7, 32)
    assert isinstance(dec.head, nn.ConvTranspose2d)
    assert dec.net[-1] is dec.head
    with torch.no_grad():
        dec.head.weight.zero_()
        dec.head.bias.zero_()
        out = dec(torch.randn(1, 128, 8, 8))
    assert torch.all(out == 0.0)  # caller's softmax then yields uniform 1/7


def test_decoder_rejects_wrong_input_width():
    with pytest.raises(ValueError):
        Decoder(100, 7, 32)


@pytest.mark.parametrize("resolution", [32, 64, 128])
def test_encoder8_output_shape(resolution):
    enc = Encoder8(7, 64, resolution)
    out = enc(torch.zeros(2, 7, resolution, resolution))
    assert out.shape == (2, 64, 8, 8)


def test_encoder8_discriminator_flag():
    plain = Encoder8(3, 32, 32, discriminator=False)
    disc = Encoder8(3, 32, 32, discriminator=True)
    plain_types = [type(m).__name__ for m in plain.net]
    disc_types = [type(m).__name__ for m in disc.net]
    assert "LeakyReLU" not in plain_types
    assert "ReLU" not in disc_types
    # no norm right after the first conv in discriminator mode
    assert disc_types[0] == "Conv2d" and disc_types[1] == "LeakyReLU"
    assert plain_types[0] == "Conv2d" and plain_types[1] == "BatchNorm2d"


def test_seed_projection_shape():
    proj = SeedProjection(150, 96)
    out = proj(torch.zeros(3, 150))
    assert out.shape == (3, 96, 8, 8)
    assert out.min() >= 0  # relu output


def test_score_head_range_and_shape():
    head = ScoreHead(16)
    out = head(torch.randn(5, 16, 8, 8))
    assert out.shape == (5,)
    assert out.min() > 0.0 and out.max() < 1.0


def test_seed_encoder_keeps_8x8():
    enc = SeedEncoder(4, 32, 16)
    out = enc(torch.zeros(2, 4, 8, 8))
    assert out.shape == (2, 32, 8, 8)


def test_tile_vector():
    v = torch.tensor([[1.0, 2.0], [3.0, 4.0]])
    tiled = tile_vector(v, 8)
    assert tiled.shape == (2, 2, 8, 8)
    assert torch.all(tiled[0, 0] == 1.0) and torch.all(tiled[1, 1] == 4.0)


def test_chw_round_trip():
    rng = np.random.default_rng(0)
    arr = rng.random((9, 11, 5))
    t = to_chw(arr)
    assert t.shape == (1, 5, 9, 11)
    back = from_chw(t)
    np.testing.assert_allclose(back, arr, atol=1e-6)  # float32 hop
