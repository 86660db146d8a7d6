"""Adversarial training for both stages, checkpointing, and inference.

Both stages (and the baselines) share one loop: alternating
discriminator/generator updates with non-saturating losses. The caption
encoder is updated together with the discriminator; generator updates
see the text vector detached, so the encoder cannot be pushed towards
collapsing all captions to one point. The discriminator additionally
scores real images against mismatched design codings, which forces it
(and therefore the generator) to actually use the conditioning.

Checkpoints are single zip files: ``manifest.json`` (human-readable
metadata), ``vocab.txt`` (one token per line), and ``arrays/*.npy``
(named float32 parameter and optimizer arrays). Writing is
byte-deterministic: fixed zip timestamps, sorted member order.
"""

from __future__ import annotations

import dataclasses
import hashlib
import io
import json
import zipfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .baselines import (
    NonCompositionalGenerator,
    OneStepDiscriminator,
    OneStepGenerator,
    unmerged_prior,
)
from .core_types import (
    ATTRIBUTE_DIM,
    Attributes,
    DesignCoding,
    ImageRGB,
    LatentNoise,
    NOISE_DIM,
    PersonRecord,
    SegMap,
    argmax_labels,
    one_hot_map,
    validate_segmap,
)
from .errors import (
    DatasetEmpty,
    MissingCheckpoint,
    NonFiniteLoss,
    ShapeMismatch,
    StageMismatch,
)
from .image_gan import (
    ImageDiscriminator,
    ImageGenerator,
    compose,
    compose_torch,
    generate_texture_channels,
    replace_head,
)
from .preprocess import build_design_coding, build_spatial_constraint, extract_attributes
from .shape_gan import ShapeDiscriminator, ShapeGenerator, generate_shape
from .synth_data import contradict_caption
from .text_encoder import TextEncoder, Vocabulary, build_vocabulary, tokenize

PROB_EPS = 1e-7
STAGES = ("shape", "image", "one-step-8-7", "one-step-8-4", "non-compositional")
CHECKPOINT_FORMAT = "fashion-synth-checkpoint/1"
RESOLUTIONS = (32, 64, 128)


def derive_stage_seeds(seed: int) -> tuple:
    """Split one user-facing seed into independent per-stage noise seeds."""
    children = np.random.SeedSequence(seed).spawn(2)
    return tuple(int(c.generate_state(1, np.uint64)[0]) for c in children)


@dataclass(frozen=True)
class TrainConfig:
    stage: str
    epochs: int
    batch_size: int = 16
    learning_rate: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    resolution: int = 32
    seed: int = 0
    dataset_dir: str = ""
    checkpoint_dir: str = ""

    def __post_init__(self):
        if self.stage not in STAGES:
            raise ValueError(f"stage must be one of {STAGES}, got {self.stage!r}")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.batch_size < 2:
            raise ValueError("batch size must be at least 2")
        if self.resolution not in RESOLUTIONS:
            raise ValueError(f"resolution must be one of {RESOLUTIONS}")

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    def hash(self) -> str:
        blob = json.dumps(self.as_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def gan_losses(d_real, d_fake):
    """Non-saturating GAN losses from discriminator probabilities.

    loss_D = -mean log d_real - mean log(1 - d_fake)
    loss_G = -mean log d_fake

    Probabilities are clipped 1e-7 away from {0, 1} so the logs stay
    finite. Accepts torch tensors (training path, differentiable) or
    array-likes (returns floats).
    """
    if torch.is_tensor(d_real):
        r = torch.clamp(d_real, PROB_EPS, 1.0 - PROB_EPS)
        f = torch.clamp(d_fake, PROB_EPS, 1.0 - PROB_EPS)
        loss_d = -torch.log(r).mean() - torch.log(1.0 - f).mean()
        loss_g = -torch.log(f).mean()
        return loss_d, loss_g
    r = np.clip(np.asarray(d_real, dtype=np.float64), PROB_EPS, 1.0 - PROB_EPS)
    f = np.clip(np.asarray(d_fake, dtype=np.float64), PROB_EPS, 1.0 - PROB_EPS)
    loss_d = float(-np.mean(np.log(r)) - np.mean(np.log(1.0 - f)))
    loss_g = float(-np.mean(np.log(f)))
    return loss_d, loss_g


# --- checkpoint container -----------------------------------------------

@dataclass
class Checkpoint:
    stage: str
    epoch: int
    config: dict
    loss_history: list
    vocab_tokens: list
    arrays: dict
    counts: dict = field(default_factory=dict)
    path: str = ""

    @property
    def resolution(self) -> int:
        return int(self.config["resolution"])

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.config, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def manifest(self) -> dict:
        return {
            "format": CHECKPOINT_FORMAT,
            "stage": self.stage,
            "epoch": self.epoch,
            "config": self.config,
            "config_hash": self.config_hash,
            "loss_history": self.loss_history,
            "counts": self.counts,
            "arrays": sorted(self.arrays),
        }

    def save(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with zipfile.ZipFile(path, "w", zipfile.ZIP_DEFLATED) as zf:
            def put(name, data):
                # fixed timestamp keeps the file byte-identical across runs
                info = zipfile.ZipInfo(name, date_time=(1980, 1, 1, 0, 0, 0))
                info.compress_type = zipfile.ZIP_DEFLATED
                info.external_attr = 0o644 << 16
                zf.writestr(info, data)

            put("manifest.json",
                json.dumps(self.manifest(), indent=2, sort_keys=True).encode())
            put("vocab.txt", ("\n".join(self.vocab_tokens) + "\n").encode())
            for name in sorted(self.arrays):
                buf = io.BytesIO()
                np.save(buf, np.asarray(self.arrays[name], dtype=np.float32))
                put(f"arrays/{name}.npy", buf.getvalue())
        self.path = str(path)


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise MissingCheckpoint(f"no checkpoint at {path}")
    with zipfile.ZipFile(path) as zf:
        manifest = json.loads(zf.read("manifest.json"))
        if manifest.get("format") != CHECKPOINT_FORMAT:
            raise StageMismatch(
                f"{path} is not a {CHECKPOINT_FORMAT} file")
        vocab_tokens = zf.read("vocab.txt").decode().splitlines()
        arrays = {}
        prefix, suffix = "arrays/", ".npy"
        for member in zf.namelist():
            if member.startswith(prefix) and member.endswith(suffix):
                name = member[len(prefix):-len(suffix)]
                arrays[name] = np.load(io.BytesIO(zf.read(member)))
    return Checkpoint(
        stage=manifest["stage"],
        epoch=manifest["epoch"],
        config=manifest["config"],
        loss_history=manifest["loss_history"],
        vocab_tokens=vocab_tokens,
        arrays=arrays,
        counts=manifest.get("counts", {}),
        path=str(path),
    )


def build_models(stage: str, resolution: int, vocab_size: int):
    """Fresh (generator, discriminator, text encoder) for a stage."""
    if stage == "shape":
        gen = ShapeGenerator(resolution)
        disc = ShapeDiscriminator(resolution)
    elif stage == "image":
        gen = ImageGenerator(resolution)
        disc = ImageDiscriminator(resolution)
    elif stage in ("one-step-8-7", "one-step-8-4"):
        variant = stage[len("one-step-"):]
        gen = OneStepGenerator(resolution, variant)
        disc = OneStepDiscriminator(resolution, variant)
    elif stage == "non-compositional":
        gen = NonCompositionalGenerator(resolution)
        disc = ImageDiscriminator(resolution)
    else:
        raise ValueError(f"unknown stage {stage!r}")
    return gen, disc, TextEncoder(vocab_size)


def _state_arrays(prefix: str, module: torch.nn.Module) -> dict:
    out = {}
    for key, value in module.state_dict().items():
        out[f"{prefix}/{key}"] = value.detach().cpu().numpy().astype(np.float32)
    return out


def _load_state(module: torch.nn.Module, arrays: dict, prefix: str) -> None:
    state = module.state_dict()
    loaded = {}
    for key, ref in state.items():
        name = f"{prefix}/{key}"
        if name not in arrays:
            raise StageMismatch(f"checkpoint lacks array {name}")
        tensor = torch.from_numpy(np.ascontiguousarray(arrays[name]))
        if ref.dtype != torch.float32:
            tensor = tensor.to(ref.dtype)  # num_batches_tracked is integral
        loaded[key] = tensor.view(ref.shape)
    module.load_state_dict(loaded)


def restore_models(ckpt: Checkpoint):
    """Rebuild and load (generator, discriminator, encoder, vocab)."""
    vocab = Vocabulary(ckpt.vocab_tokens)
    gen, disc, encoder = build_models(ckpt.stage, ckpt.resolution, len(vocab))
    _load_state(gen, ckpt.arrays, "generator")
    _load_state(disc, ckpt.arrays, "discriminator")
    _load_state(encoder, ckpt.arrays, "encoder")
    gen.eval()
    disc.eval()
    encoder.eval()
    return gen, disc, encoder, vocab


def _opt_arrays(prefix: str, opt: torch.optim.Adam) -> dict:
    out = {}
    for idx, state in opt.state_dict()["state"].items():
        for key, value in state.items():
            arr = value.detach().cpu().numpy() if torch.is_tensor(value) else np.asarray(value)
            out[f"{prefix}/{idx}/{key}"] = np.atleast_1d(arr).astype(np.float32)
    return out


# --- batch preparation --------------------------------------------------

class _StageData:
    """Dense float32 tensors for every record, built once per run."""

    def __init__(self, records, vocab: Vocabulary, config: TrainConfig):
        r = config.resolution
        for rec in records:
            if rec.image.height != r or rec.image.width != r:
                raise ShapeMismatch(
                    f"record {rec.record_id or '?'} is {rec.image.height}x"
                    f"{rec.image.width}, config wants {r}x{r}")
        images, maps, constraints, attrs, tokens = [], [], [], [], []
        priors7 = []
        want_p7 = config.stage == "one-step-8-7"
        for rec in records:
            images.append(np.transpose(rec.image.pixels, (2, 0, 1)))
            maps.append(np.transpose(rec.segmap.probs, (2, 0, 1)))
            constraints.append(
                np.transpose(build_spatial_constraint(rec).probs, (2, 0, 1)))
            attrs.append(extract_attributes(rec))
            tokens.append(tokenize(rec.caption, vocab))
            if want_p7:
                priors7.append(np.transpose(unmerged_prior(rec.segmap), (2, 0, 1)))

        # Mismatched captions for the discriminator: same wearer, different
        # garments when the caption template allows it, else the next
        # record's caption.
        wrong = []
        for at, rec in enumerate(records):
            alt = contradict_caption(rec.caption)
            if alt is None:
                alt = records[(at + 1) % len(records)].caption
            wrong.append(tokenize(alt, vocab))

        def t(stack, dtype=np.float32):
            return torch.from_numpy(np.stack(stack).astype(dtype))

        self.images = t(images)
        self.maps = t(maps)
        self.constraints = t(constraints)
        self.attrs = t(attrs)
        self.tokens = torch.from_numpy(np.asarray(tokens, dtype=np.int64))
        self.wrong_tokens = torch.from_numpy(np.asarray(wrong, dtype=np.int64))
        self.priors7 = t(priors7) if want_p7 else None
        self.count = len(records)


def _stage_condition(data: _StageData, idx: torch.Tensor, stage: str):
    """The conditioning raster fed to G and D for this stage."""
    if stage == "shape":
        return data.constraints[idx]
    if stage == "one-step-8-4":
        return data.constraints[idx]
    if stage == "one-step-8-7":
        return data.priors7[idx]
    return data.maps[idx]  # image, non-compositional


def _stage_real(data: _StageData, idx: torch.Tensor, stage: str):
    return data.maps[idx] if stage == "shape" else data.images[idx]


def _generate_fake(gen, stage, z, d, cond, masks):
    if stage == "image":
        channels = gen(z, d, cond)
        return compose_torch(channels, masks)
    return gen(z, d, cond)


def train_stage(config: TrainConfig, records) -> Checkpoint:
    """Run the adversarial loop for one stage and return the final state.

    Per batch: one discriminator update (real, fake, mismatched-condition,
    and caption-transfer terms; encoder updates here too), then one
    generator update with the text vector detached, including a transfer
    term that conditions on a swapped caption. Emits a checkpoint per
    epoch (rolling ``<stage>_latest.zip``) plus ``<stage>_final.zip``.
    """
    records = list(records)
    if not records:
        raise DatasetEmpty("no training records")
    if config.batch_size > len(records):
        raise ValueError(
            f"batch size {config.batch_size} exceeds dataset size {len(records)}")

    torch.set_num_threads(1)
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)

    vocab = build_vocabulary(rec.caption for rec in records)
    gen, disc, encoder = build_models(config.stage, config.resolution, len(vocab))
    data = _StageData(records, vocab, config)

    opt_g = torch.optim.Adam(gen.parameters(), lr=config.learning_rate,
                             betas=(config.beta1, config.beta2))
    opt_d = torch.optim.Adam(
        list(disc.parameters()) + list(encoder.parameters()),
        lr=config.learning_rate, betas=(config.beta1, config.beta2))

    ckpt_dir = Path(config.checkpoint_dir) if config.checkpoint_dir else None
    n_batches = data.count // config.batch_size
    loss_history = []
    d_updates = g_updates = 0

    def noise(batch):
        z = rng.standard_normal((batch, NOISE_DIM)).astype(np.float32)
        return torch.from_numpy(z)

    def snapshot(epoch):
        arrays = {}
        arrays.update(_state_arrays("generator", gen))
        arrays.update(_state_arrays("discriminator", disc))
        arrays.update(_state_arrays("encoder", encoder))
        arrays.update(_opt_arrays("opt_g", opt_g))
        arrays.update(_opt_arrays("opt_d", opt_d))
        return Checkpoint(
            stage=config.stage, epoch=epoch, config=config.as_dict(),
            loss_history=list(loss_history), vocab_tokens=list(vocab.tokens),
            arrays=arrays,
            counts={"d_updates": d_updates, "g_updates": g_updates},
        )

    ckpt = None
    for epoch in range(1, config.epochs + 1):
        perm = rng.permutation(data.count)
        epoch_d, epoch_g = [], []
        for b in range(n_batches):
            idx = torch.from_numpy(perm[b * config.batch_size:(b + 1) * config.batch_size])
            cond = _stage_condition(data, idx, config.stage)
            real = _stage_real(data, idx, config.stage)
            masks = data.maps[idx] if config.stage == "image" else None

            # discriminator (and encoder) update
            opt_d.zero_grad(set_to_none=True)
            v = encoder(data.tokens[idx])
            d_vec = torch.cat([data.attrs[idx], v], dim=1)
            with torch.no_grad():
                fake = _generate_fake(gen, config.stage, noise(len(idx)),
                                      d_vec.detach(), cond, masks)
            score_real = disc(real, d_vec, cond)
            score_fake = disc(fake, d_vec, cond)
            # Mismatched pair keeps the wearer attributes and swaps only the
            # caption embedding, so the only way to score it low is to read
            # the text.
            v_wrong = encoder(data.wrong_tokens[idx])
            wrong_vec = torch.cat([data.attrs[idx], v_wrong], dim=1)
            score_wrong = disc(real, wrong_vec, cond)
            # Transfer fake: generated under the swapped caption but the
            # original wearer's constraint. Without this term the
            # discriminator never grades such pairs, and the generator's
            # transfer term below could satisfy it with garbage.
            with torch.no_grad():
                fake_w = _generate_fake(gen, config.stage, noise(len(idx)),
                                        wrong_vec.detach(), cond, masks)
            score_fake_w = disc(fake_w, wrong_vec, cond)
            loss_d, _ = gan_losses(score_real, score_fake)
            wrong = torch.clamp(1.0 - score_wrong, PROB_EPS, 1.0)
            fake_w_p = torch.clamp(1.0 - score_fake_w, PROB_EPS, 1.0)
            loss_d = (loss_d + 0.5 * (-torch.log(wrong).mean())
                      + 0.5 * (-torch.log(fake_w_p).mean()))
            if not torch.isfinite(loss_d):
                raise NonFiniteLoss(
                    f"discriminator loss became {loss_d.item()} at "
                    f"epoch {epoch} batch {b} (stage {config.stage})")
            loss_d.backward()
            opt_d.step()
            d_updates += 1

            # generator update; encoder output detached on purpose
            opt_g.zero_grad(set_to_none=True)
            with torch.no_grad():
                v_g = encoder(data.tokens[idx])
            d_vec_g = torch.cat([data.attrs[idx], v_g], dim=1)
            fake_g = _generate_fake(gen, config.stage, noise(len(idx)),
                                    d_vec_g, cond, masks)
            score_fake_g = disc(fake_g, d_vec_g, cond)
            _, loss_g = gan_losses(score_fake_g, score_fake_g)
            # Caption-transfer term: the generator must also satisfy the
            # discriminator when the caption names a different outfit than
            # the one the constraint was built from. Test-time generation
            # is exactly this regime, and without the term the generator
            # only ever trains on agreeing pairs.
            with torch.no_grad():
                v_gw = encoder(data.wrong_tokens[idx])
            wrong_vec_g = torch.cat([data.attrs[idx], v_gw], dim=1)
            fake_gw = _generate_fake(gen, config.stage, noise(len(idx)),
                                     wrong_vec_g, cond, masks)
            score_fake_gw = disc(fake_gw, wrong_vec_g, cond)
            _, loss_g_w = gan_losses(score_fake_gw, score_fake_gw)
            loss_g = loss_g + 0.5 * loss_g_w
            if not torch.isfinite(loss_g):
                raise NonFiniteLoss(
                    f"generator loss became {loss_g.item()} at "
                    f"epoch {epoch} batch {b} (stage {config.stage})")
            loss_g.backward()
            opt_g.step()
            g_updates += 1

            epoch_d.append(float(loss_d.item()))
            epoch_g.append(float(loss_g.item()))

        loss_history.append({
            "epoch": epoch,
            "loss_d": float(np.mean(epoch_d)),
            "loss_g": float(np.mean(epoch_g)),
        })
        _spot_check(gen, config, records[0], vocab, encoder)
        ckpt = snapshot(epoch)
        if ckpt_dir is not None:
            ckpt.save(ckpt_dir / f"{config.stage}_latest.zip")

    if ckpt_dir is not None:
        ckpt.save(ckpt_dir / f"{config.stage}_final.zip")
    return ckpt


def _spot_check(gen, config: TrainConfig, record: PersonRecord,
                vocab: Vocabulary, encoder: TextEncoder) -> None:
    """Per-epoch invariant probe on one sample; raises on violation."""
    from .text_encoder import encode_text

    d = build_design_coding(record, encode_text(encoder, record.caption, vocab))
    z = LatentNoise.draw(0)
    if config.stage == "shape":
        generated = generate_shape(z, build_spatial_constraint(record), d, gen)
        validate_segmap(generated.probs)
    elif config.stage == "image":
        channels = generate_texture_channels(z, record.segmap, d, gen)
        if np.abs(channels).max() > 1.0:
            raise ValueError("texture channel left [-1, 1]")


# --- end-to-end inference ----------------------------------------------

class Pipeline:
    """Both trained stages loaded together for test-time generation."""

    def __init__(self, shape_checkpoint, image_checkpoint):
        self.shape_ckpt = (shape_checkpoint
                           if isinstance(shape_checkpoint, Checkpoint)
                           else load_checkpoint(shape_checkpoint))
        self.image_ckpt = (image_checkpoint
                           if isinstance(image_checkpoint, Checkpoint)
                           else load_checkpoint(image_checkpoint))
        if self.shape_ckpt.stage != "shape":
            raise StageMismatch(
                f"expected a shape checkpoint, got {self.shape_ckpt.stage!r}")
        if self.image_ckpt.stage != "image":
            raise StageMismatch(
                f"expected an image checkpoint, got {self.image_ckpt.stage!r}")
        if self.shape_ckpt.vocab_tokens != self.image_ckpt.vocab_tokens:
            raise StageMismatch("stage checkpoints carry different vocabularies")
        if self.shape_ckpt.resolution != self.image_ckpt.resolution:
            raise StageMismatch("stage checkpoints trained at different resolutions")
        self.resolution = self.shape_ckpt.resolution
        self.shape_gen, _, self.shape_encoder, self.vocab = restore_models(self.shape_ckpt)
        self.image_gen, _, self.image_encoder, _ = restore_models(self.image_ckpt)

    def design_for(self, record: PersonRecord, stage: str) -> DesignCoding:
        from .text_encoder import encode_text

        encoder = self.shape_encoder if stage == "shape" else self.image_encoder
        return build_design_coding(
            record, encode_text(encoder, record.caption, self.vocab))

    def run(self, image: ImageRGB, segmap: SegMap, caption: str, seeds,
            attributes: Attributes | None = None):
        """Full test-time path -> (generated map, final image)."""
        record = PersonRecord(image=image, segmap=segmap, caption=caption,
                              attributes=attributes or Attributes())
        constraint = build_spatial_constraint(record)
        seed_shape, seed_image = seeds
        z_s = LatentNoise.draw(seed_shape)
        map_soft = generate_shape(z_s, constraint,
                                  self.design_for(record, "shape"),
                                  self.shape_gen)
        map_hard = SegMap(one_hot_map(argmax_labels(map_soft.probs)))
        z_i = LatentNoise.draw(seed_image)
        channels = generate_texture_channels(
            z_i, map_hard, self.design_for(record, "image"), self.image_gen)
        composed = compose(channels, map_hard.probs, mode="hard")
        return map_soft, replace_head(composed, image, segmap)


def infer_pipeline(image: ImageRGB, segmap: SegMap, caption: str, seeds,
                   checkpoints, attributes: Attributes | None = None):
    """One-call wrapper: load checkpoints, run the pipeline once."""
    shape_ckpt, image_ckpt = checkpoints
    pipeline = Pipeline(shape_ckpt, image_ckpt)
    return pipeline.run(image, segmap, caption, seeds, attributes)
