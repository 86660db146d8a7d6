import numpy as np
import pytest
import torch

import fashion_synth as fs
from fashion_synth.errors import NonOneHot, ShapeMismatch
from fashion_synth.image_gan import (
    compose,
    compose_torch,
    HEAD_LABELS,
    ImageDiscriminator,
    ImageGenerator,
    replace_head,
)


def brute_force_compose(channels, masks):
    # per-pixel loop: out[p] = sum_l mask_l[p] * channel_l[p]
    _, m, n, _ = channels.shape
    out = np.zeros((m, n, 3))
    for y in range(m):
        for x in range(n):
            for l in range(7):
                out[y, x] += masks[y, x, l] * channels[l, y, x]
    return np.clip(out, -1.0, 1.0)


def random_case(seed, m=8, n=8):
    rng = np.random.default_rng(seed)
    channels = rng.uniform(-1.0, 1.0, size=(7, m, n, 3))
    labels = rng.integers(0, 7, size=(m, n))
    return channels, fs.one_hot_map(labels)


def test_compose_matches_brute_force():
    for seed in range(20):
        channels, masks = random_case(seed)
        got = compose(channels, masks, mode="hard")
        np.testing.assert_array_equal(got.pixels,
                                      brute_force_compose(channels, masks))


def test_soft_equals_hard_on_one_hot():
    channels, masks = random_case(101)
    hard = compose(channels, masks, mode="hard")
    soft = compose(channels, masks, mode="soft")
    np.testing.assert_array_equal(hard.pixels, soft.pixels)


def test_hard_mode_rejects_soft_masks():
    channels, masks = random_case(102)
    soft_masks = masks * 0.5 + 0.5 / 7
    with pytest.raises(NonOneHot):
        compose(channels, soft_masks, mode="hard")


def test_compose_rejects_bad_shapes():
    channels, masks = random_case(103)
    with pytest.raises(ShapeMismatch):
        compose(channels[:5], masks)
    with pytest.raises(ShapeMismatch):
        compose(channels, masks[:4])
    with pytest.raises(ValueError):
        compose(channels, masks, mode="fuzzy")


def test_compose_accepts_segmap_masks():
    channels, masks = random_case(104)
    a = compose(channels, masks)
    b = compose(channels, fs.SegMap(masks))
    np.testing.assert_array_equal(a.pixels, b.pixels)


def test_compose_output_clipped():
    channels = np.full((7, 4, 4, 3), 1.0)
    masks = np.full((4, 4, 7), 1.0 / 7) * 1.0
    # soft blend of all-ones stays 1.0 after clipping
    out = compose(channels, masks, mode="soft")
    assert out.pixels.max() <= 1.0 and out.pixels.min() >= -1.0


def test_compose_torch_matches_numpy():
    channels, masks = random_case(105)
    t_channels = torch.tensor(channels).permute(0, 3, 1, 2).unsqueeze(0)
    t_masks = torch.tensor(np.transpose(masks, (2, 0, 1))).unsqueeze(0)
    got = compose_torch(t_channels, t_masks).squeeze(0).permute(1, 2, 0)
    expected = compose(channels, masks, mode="hard")
    np.testing.assert_allclose(got.numpy(), expected.pixels, atol=1e-12)


def test_compose_gradient_wrt_channels_fd():
    # d(out)/d(channel[l,y,x,c]) = mask[y,x,l]; verify by central FD
    channels, masks = random_case(106, m=6, n=6)
    t_channels = torch.tensor(channels, requires_grad=True)
    t_masks = torch.tensor(np.transpose(masks, (2, 0, 1)))
    out = (t_channels.permute(0, 3, 1, 2).unsqueeze(0) * t_masks.unsqueeze(0).unsqueeze(2)).sum(dim=1)
    out.sum().backward()
    rng = np.random.default_rng(107)
    step = 1e-3
    base = channels.copy()
    for _ in range(10):
        l = int(rng.integers(7)); y = int(rng.integers(6))
        x = int(rng.integers(6)); c = int(rng.integers(3))
        up = base.copy(); up[l, y, x, c] += step
        down = base.copy(); down[l, y, x, c] -= step
        fd = (brute_force_compose(up, masks).sum()
              - brute_force_compose(down, masks).sum()) / (2 * step)
        an = float(t_channels.grad[l, y, x, c])
        assert abs(fd - an) <= 1e-3 * max(1.0, abs(fd))


def test_generate_texture_channels_shape_and_range():
    torch.manual_seed(0)
    gen = ImageGenerator(32)
    z = fs.LatentNoise.draw(1)
    labels = np.random.default_rng(2).integers(0, 7, size=(32, 32))
    segmap = fs.SegMap(fs.one_hot_map(labels))
    vec = np.zeros(50); vec[10:] = 0.3
    channels = fs.generate_texture_channels(z, segmap, fs.DesignCoding(vec), gen)
    assert channels.shape == (7, 32, 32, 3)
    assert channels.min() >= -1.0 and channels.max() <= 1.0
    again = fs.generate_texture_channels(z, segmap, fs.DesignCoding(vec), gen)
    np.testing.assert_array_equal(channels, again)


def test_zeroed_generator_head_gives_zero_channels():
    torch.manual_seed(1)
    gen = ImageGenerator(32)
    with torch.no_grad():
        gen.decode.head.weight.zero_()
        gen.decode.head.bias.zero_()
    z = fs.LatentNoise.draw(3)
    labels = np.random.default_rng(4).integers(0, 7, size=(32, 32))
    segmap = fs.SegMap(fs.one_hot_map(labels))
    channels = fs.generate_texture_channels(z, segmap, fs.DesignCoding(np.zeros(50)), gen)
    np.testing.assert_array_equal(channels, np.zeros_like(channels))  # tanh(0)


def test_discriminate_image_range_and_zeroed_head():
    torch.manual_seed(2)
    disc = ImageDiscriminator(32)
    rng = np.random.default_rng(5)
    image = fs.ImageRGB(rng.uniform(-1, 1, size=(32, 32, 3)))
    segmap = fs.SegMap(fs.one_hot_map(rng.integers(0, 7, size=(32, 32))))
    d = fs.DesignCoding(np.zeros(50))
    score = fs.discriminate_image(image, segmap, d, disc)
    assert 0.0 < score < 1.0
    with torch.no_grad():
        disc.head.conv.weight.zero_()
        disc.head.conv.bias.zero_()
    assert abs(fs.discriminate_image(image, segmap, d, disc) - 0.5) < 1e-7


def test_replace_head_copies_hair_and_face():
    rng = np.random.default_rng(6)
    generated = fs.ImageRGB(rng.uniform(-1, 1, size=(16, 16, 3)))
    original = fs.ImageRGB(rng.uniform(-1, 1, size=(16, 16, 3)))
    labels = rng.integers(0, 7, size=(16, 16))
    segmap = fs.SegMap(fs.one_hot_map(labels))
    out = replace_head(generated, original, segmap)
    keep = np.isin(labels, HEAD_LABELS)
    np.testing.assert_array_equal(out.pixels[keep], original.pixels[keep])
    np.testing.assert_array_equal(out.pixels[~keep], generated.pixels[~keep])


def test_replace_head_rejects_size_mismatch():
    rng = np.random.default_rng(7)
    a = fs.ImageRGB(rng.uniform(-1, 1, size=(16, 16, 3)))
    b = fs.ImageRGB(rng.uniform(-1, 1, size=(8, 8, 3)))
    segmap = fs.SegMap(fs.one_hot_map(rng.integers(0, 7, size=(16, 16))))
    with pytest.raises(ShapeMismatch):
        replace_head(a, b, segmap)
