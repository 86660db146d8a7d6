import numpy as np
import pytest
import torch
from torch import nn

from fashion_synth.baselines import (
    NonCompositionalGenerator,
    ONE_STEP_VARIANTS,
    OneStepDiscriminator,
    OneStepGenerator,
    noncomp_generate,
    one_step_generate,
    parameter_count,
    unmerged_prior,
)
from fashion_synth.core_types import (
    CONSTRAINT_SIZE,
    DESIGN_DIM,
    DesignCoding,
    LatentNoise,
    NOISE_DIM,
    NUM_CONSTRAINT_LABELS,
    NUM_LABELS,
)
from fashion_synth.errors import PriorShapeMismatch
from fashion_synth.image_gan import ImageGenerator, compose, generate_texture_channels
from fashion_synth.preprocess import downsample_bicubic, merge_labels


def constraint4(segmap) -> np.ndarray:
    return downsample_bicubic(merge_labels(segmap))


def make_design(rng) -> DesignCoding:
    vec = np.concatenate([
        np.array([1.0, 0.0, 1.0, 0.0]),
        np.full(6, 0.5),
        rng.uniform(-1.0, 1.0, DESIGN_DIM - 10),
    ])
    return DesignCoding(vec)


@pytest.fixture()
def inputs(records):
    rng = np.random.default_rng(31)
    z = LatentNoise.draw(rng)
    return z, make_design(rng), records[0].segmap


def test_variant_channel_table():
    assert ONE_STEP_VARIANTS == {"8-7": NUM_LABELS, "8-4": NUM_CONSTRAINT_LABELS}
    assert OneStepGenerator(32, "8-7").prior_channels == 7
    assert OneStepGenerator(32, "8-4").prior_channels == 4


def test_unknown_variant_rejected():
    with pytest.raises(ValueError):
        OneStepGenerator(32, "8-5")
    with pytest.raises(ValueError):
        OneStepDiscriminator(32, "full")


def test_unmerged_prior_is_plain_downsample(records):
    probs = records[2].segmap.probs
    prior = unmerged_prior(records[2].segmap)
    assert prior.shape == (CONSTRAINT_SIZE, CONSTRAINT_SIZE, NUM_LABELS)
    assert np.array_equal(prior, downsample_bicubic(probs, CONSTRAINT_SIZE))
    assert np.allclose(prior.sum(axis=2), 1.0, atol=1e-9)


def test_one_step_generate_contract(inputs):
    z, d, segmap = inputs
    for variant, prior in (("8-7", unmerged_prior(segmap)),
                           ("8-4", constraint4(segmap))):
        torch.manual_seed(5)
        gen = OneStepGenerator(32, variant)
        img = one_step_generate(z, prior, d, gen)
        assert img.pixels.shape == (32, 32, 3)
        assert img.pixels.min() >= -1.0 and img.pixels.max() <= 1.0
        again = one_step_generate(z, prior, d, gen)
        assert np.array_equal(img.pixels, again.pixels)


def test_one_step_prior_shape_checked(inputs):
    z, d, segmap = inputs
    seven = unmerged_prior(segmap)
    four = constraint4(segmap)
    torch.manual_seed(5)
    gen7 = OneStepGenerator(32, "8-7")
    torch.manual_seed(5)
    gen4 = OneStepGenerator(32, "8-4")
    with pytest.raises(PriorShapeMismatch):
        one_step_generate(z, four, d, gen7)
    with pytest.raises(PriorShapeMismatch):
        one_step_generate(z, seven, d, gen4)
    with pytest.raises(PriorShapeMismatch):
        one_step_generate(z, seven[:4], d, gen7)


def test_one_step_generate_restores_training_mode(inputs):
    z, d, segmap = inputs
    torch.manual_seed(5)
    gen = OneStepGenerator(32, "8-4")
    gen.train()
    one_step_generate(z, constraint4(segmap), d, gen)
    assert gen.training


def conv_p(c_in: int, c_out: int, k: int) -> int:
    return c_in * c_out * k * k + c_out


def bn_p(c: int) -> int:
    return 2 * c


def lin_p(n_in: int, n_out: int) -> int:
    return n_in * n_out + n_out


def analytic_one_step_counts(b: int, prior_channels: int):
    # 6 deconv layers 8->32: strides [2,2,1,1,1,1], k=4 at stride 2 else 3
    widths = [8 * b, 8 * b, 4 * b, 2 * b, b, b]
    outs = widths[1:] + [3]
    gen = lin_p(NOISE_DIM + DESIGN_DIM, 6 * b * 64) + bn_p(6 * b)
    gen += conv_p(prior_channels, b, 3) + bn_p(b)
    gen += conv_p(b, 2 * b, 3) + bn_p(2 * b)
    c_in = widths[0]
    for i, (stride, c_out) in enumerate(zip([2, 2, 1, 1, 1, 1], outs)):
        gen += conv_p(c_in, c_out, 4 if stride == 2 else 3)
        if i < 5:
            gen += bn_p(c_out)
        c_in = c_out
    # 5 conv layers 32->8: strides [2,2,1,1,1], no norm on layer 0
    disc = 0
    c_in = 3 + prior_channels
    for i, (stride, c_out) in enumerate(
            zip([2, 2, 1, 1, 1], [b, 2 * b, 4 * b, 8 * b, 8 * b])):
        disc += conv_p(c_in, c_out, 4 if stride == 2 else 3)
        if i > 0:
            disc += bn_p(c_out)
        c_in = c_out
    head_in = 8 * b + DESIGN_DIM
    disc += conv_p(head_in, head_in, 1) + conv_p(head_in, 1, 8)
    return gen, disc


@pytest.mark.parametrize("variant,gen_total,disc_total", [
    ("8-7", 1_353_459, 294_695),
    ("8-4", 1_353_027, 293_927),
])
def test_parameter_counts_match_analytic_formula(variant, gen_total, disc_total):
    channels = ONE_STEP_VARIANTS[variant]
    gen_formula, disc_formula = analytic_one_step_counts(16, channels)
    assert gen_formula == gen_total
    assert disc_formula == disc_total
    assert parameter_count(OneStepGenerator(32, variant)) == gen_total
    assert parameter_count(OneStepDiscriminator(32, variant)) == disc_total


def test_variants_differ_only_in_prior_input_layer():
    torch.manual_seed(0)
    g7 = OneStepGenerator(32, "8-7")
    torch.manual_seed(0)
    g4 = OneStepGenerator(32, "8-4")
    shapes7 = {n: tuple(p.shape) for n, p in g7.named_parameters()}
    shapes4 = {n: tuple(p.shape) for n, p in g4.named_parameters()}
    assert shapes7.keys() == shapes4.keys()
    differing = [n for n in shapes7 if shapes7[n] != shapes4[n]]
    assert differing == ["encode_prior.net.0.weight"]
    d7 = OneStepDiscriminator(32, "8-7")
    d4 = OneStepDiscriminator(32, "8-4")
    dshapes7 = {n: tuple(p.shape) for n, p in d7.named_parameters()}
    dshapes4 = {n: tuple(p.shape) for n, p in d4.named_parameters()}
    differing = [n for n in dshapes7 if dshapes7[n] != dshapes4[n]]
    assert differing == ["trunk.net.0.weight"]


def test_one_step_discriminator_score(inputs):
    z, d, segmap = inputs
    torch.manual_seed(3)
    disc = OneStepDiscriminator(32, "8-4").eval()
    prior = torch.from_numpy(
        np.transpose(constraint4(segmap), (2, 0, 1))
    ).unsqueeze(0).float()
    image = torch.zeros(1, 3, 32, 32)
    dvec = torch.from_numpy(d.values.copy()).view(1, -1).float()
    with torch.no_grad():
        score = disc(image, dvec, prior)
    assert 0.0 < float(score) < 1.0
    nn.init.zeros_(disc.head.conv.weight)
    nn.init.zeros_(disc.head.conv.bias)
    with torch.no_grad():
        score = disc(image, dvec, prior)
    assert abs(float(score) - 0.5) < 1e-7


def test_noncomp_generate_contract(inputs):
    z, d, segmap = inputs
    torch.manual_seed(9)
    gen = NonCompositionalGenerator(32)
    img = noncomp_generate(z, segmap, d, gen)
    assert img.pixels.shape == (32, 32, 3)
    assert img.pixels.min() >= -1.0 and img.pixels.max() <= 1.0
    assert np.array_equal(img.pixels, noncomp_generate(z, segmap, d, gen).pixels)


def test_noncomp_shares_trunk_shapes_with_image_gan():
    torch.manual_seed(1)
    nc = NonCompositionalGenerator(32)
    torch.manual_seed(1)
    ig = ImageGenerator(32)
    nc_shapes = {n: tuple(p.shape) for n, p in nc.named_parameters()}
    ig_shapes = {n: tuple(p.shape) for n, p in ig.named_parameters()}
    assert nc_shapes.keys() == ig_shapes.keys()
    differing = {n for n in nc_shapes if nc_shapes[n] != ig_shapes[n]}
    assert differing == {"decode.net.15.weight", "decode.net.15.bias"}
    # only the final layer widths change: 3 vs NUM_LABELS * 3 output channels
    assert nc_shapes["decode.net.15.weight"][1] == 3
    assert ig_shapes["decode.net.15.weight"][1] == NUM_LABELS * 3


def test_zeroed_heads_make_noncomp_and_image_gan_agree(inputs):
    z, d, segmap = inputs
    torch.manual_seed(2)
    nc = NonCompositionalGenerator(32)
    torch.manual_seed(2)
    ig = ImageGenerator(32)
    for gen in (nc, ig):
        nn.init.zeros_(gen.decode.head.weight)
        nn.init.zeros_(gen.decode.head.bias)
    flat = noncomp_generate(z, segmap, d, nc)
    channels = generate_texture_channels(z, segmap, d, ig)
    hard = np.zeros_like(segmap.probs)
    idx = np.argmax(segmap.probs, axis=2)
    for l in range(NUM_LABELS):
        hard[idx == l, l] = 1.0
    composed = compose(channels, hard, mode="hard")
    assert np.array_equal(flat.pixels, composed.pixels)
    assert np.all(flat.pixels == 0.0)


def test_noncomp_head_parameter_delta():
    # swapping the 21-channel head for 3 channels removes 16*18*9 weights
    # plus 18 biases at resolution 32
    nc = parameter_count(NonCompositionalGenerator(32))
    ig = parameter_count(ImageGenerator(32))
    assert ig - nc == 16 * 18 * 9 + 18
