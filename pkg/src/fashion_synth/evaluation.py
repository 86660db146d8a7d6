"""Quantitative evaluation: swap protocol, AP arithmetic, rankings, walks.

The attribute-consistency (swap) protocol: pair every test record A with
a different record B through a seeded derangement, generate A's image
under B's caption, run the attribute detector on the result, and score
the detections against B's ground-truth structure attributes. Average
precision per attribute; mAP is their mean.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .blocks import to_chw, to_vec
from .core_types import (
    Attributes,
    ImageRGB,
    LatentNoise,
    PersonRecord,
    SegMap,
    argmax_labels,
    one_hot_map,
)
from .errors import InvalidPermutation, NoPositives, TooFewIds
from .image_gan import compose, replace_head
from .preprocess import (
    build_design_coding,
    build_spatial_constraint,
    extract_attributes,
    merge_labels,
)
from .synth_data import parse_caption
from .text_encoder import encode_text
from .training import Pipeline, derive_stage_seeds, restore_models

#: Structure attributes scored by the protocol, in report order.
DETECTOR_ATTRIBUTES = ("long-sleeves", "short-sleeves", "pants", "shorts", "skirt")


def attribute_targets(caption: str) -> np.ndarray:
    """Caption -> binary vector over :data:`DETECTOR_ATTRIBUTES`."""
    parsed = parse_caption(caption)
    return np.array([
        parsed["sleeve"] == "long",
        parsed["sleeve"] == "short",
        parsed["bottom"] == "pants",
        parsed["bottom"] == "shorts",
        parsed["bottom"] == "skirt",
    ], dtype=np.float64)


class AttributeDetector(nn.Module):
    """4-layer convolutional multi-label classifier over [-1,1] images."""

    def __init__(self):
        super().__init__()
        self.net = nn.Sequential(
            nn.Conv2d(3, 32, 4, 2, 1),                         # r/2
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(32, 64, 4, 2, 1),                        # r/4
            nn.BatchNorm2d(64),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(64, 128, 4, 2, 1),                       # r/8
            nn.BatchNorm2d(128),
            nn.LeakyReLU(0.2, inplace=True),
            nn.AdaptiveAvgPool2d(4),
            nn.Conv2d(128, len(DETECTOR_ATTRIBUTES), 4),       # 1x1 logits
            nn.Flatten(),
        )

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        return self.net(images)


def train_detector(records, seed: int = 0, epochs: int = 8,
                   batch_size: int = 32, lr: float = 1e-3) -> AttributeDetector:
    """Fit the detector on real records with caption-derived targets."""
    torch.set_num_threads(1)
    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)
    images = torch.from_numpy(np.stack(
        [np.transpose(r.image.pixels, (2, 0, 1)) for r in records]
    ).astype(np.float32))
    targets = torch.from_numpy(np.stack(
        [attribute_targets(r.caption) for r in records]).astype(np.float32))
    detector = AttributeDetector()
    opt = torch.optim.Adam(detector.parameters(), lr=lr)
    loss_fn = nn.BCEWithLogitsLoss()
    n = len(records)
    for _ in range(epochs):
        perm = rng.permutation(n)
        for b in range(n // batch_size):
            idx = torch.from_numpy(perm[b * batch_size:(b + 1) * batch_size])
            opt.zero_grad(set_to_none=True)
            loss = loss_fn(detector(images[idx]), targets[idx])
            loss.backward()
            opt.step()
    detector.eval()
    return detector


def detect_attributes(detector: AttributeDetector, image: ImageRGB) -> np.ndarray:
    with torch.no_grad():
        logits = detector(to_chw(image.pixels))
    return torch.sigmoid(logits).squeeze(0).numpy().astype(np.float64)


def detector_accuracy(detector: AttributeDetector, records,
                      threshold: float = 0.5) -> float:
    hits = total = 0
    for rec in records:
        probs = detect_attributes(detector, rec.image)
        target = attribute_targets(rec.caption)
        hits += int(np.sum((probs >= threshold) == (target > 0.5)))
        total += len(target)
    return hits / total


# --- pairing and AP -----------------------------------------------------

def make_swap_pairs(test_ids, seed: int) -> dict:
    """Seeded derangement id_A -> id_B (one random cycle over all ids)."""
    ids = list(test_ids)
    if len(ids) < 2:
        raise TooFewIds(f"need at least 2 ids, got {len(ids)}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(ids))
    # consecutive elements of one cycle: i takes the caption of its successor
    return {ids[order[i]]: ids[order[(i + 1) % len(ids)]]
            for i in range(len(ids))}


def average_precision(scores, labels) -> float:
    """AP over the score-descending ranking, ties kept in input order."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be equal-length vectors")
    n_pos = int(np.sum(labels > 0.5))
    if n_pos == 0:
        raise NoPositives("average precision needs at least one positive")
    order = np.argsort(-scores, kind="stable")
    ranked = labels[order] > 0.5
    hits = np.cumsum(ranked)
    precisions = hits / np.arange(1, len(ranked) + 1)
    return float(np.sum(precisions[ranked]) / n_pos)


@dataclass
class SwapProtocolResult:
    aps: dict                      # attribute name -> AP in [0,1]
    pairing: dict                  # id_A -> id_B
    predictions: list = field(default_factory=list)
    upper_bound: bool = False
    seed: int = 0

    @property
    def map_value(self) -> float:
        return float(np.mean([self.aps[a] for a in DETECTOR_ATTRIBUTES]))

    def report_json(self) -> str:
        payload = {
            "protocol": "swap",
            "upper_bound": self.upper_bound,
            "seed": self.seed,
            "pairs": len(self.pairing),
            "ap": {a: self.aps[a] for a in DETECTOR_ATTRIBUTES},
            "map": self.map_value,
            "ap_percent": {a: round(self.aps[a] * 100.0, 1)
                           for a in DETECTOR_ATTRIBUTES},
            "map_percent": round(self.map_value * 100.0, 1),
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    def report_text(self) -> str:
        width = max(len(a) for a in DETECTOR_ATTRIBUTES + ("attribute",))
        lines = [f"{'attribute':<{width}}      AP"]
        for a in DETECTOR_ATTRIBUTES:
            lines.append(f"{a:<{width}}   {self.aps[a] * 100.0:5.1f}")
        lines.append(f"{'mAP':<{width}}   {self.map_value * 100.0:5.1f}")
        return "\n".join(lines)


def run_swap_protocol(model, records, detector: AttributeDetector,
                      seed: int) -> SwapProtocolResult:
    """Execute the swap protocol.

    ``model(record_a, caption_b, seed) -> ImageRGB`` generates wearer A
    under caption B; pass ``model=None`` for the upper-bound mode that
    scores the detector on B's real image instead.
    """
    by_id = {rec.record_id: rec for rec in records}
    pairing = make_swap_pairs(sorted(by_id), seed)
    scores = {a: [] for a in DETECTOR_ATTRIBUTES}
    labels = {a: [] for a in DETECTOR_ATTRIBUTES}
    predictions = []
    for i, id_a in enumerate(sorted(pairing)):
        id_b = pairing[id_a]
        rec_a, rec_b = by_id[id_a], by_id[id_b]
        if model is None:
            probe = rec_b.image
        else:
            probe = model(rec_a, rec_b.caption, seed + i)
        probs = detect_attributes(detector, probe)
        target = attribute_targets(rec_b.caption)
        for k, attr in enumerate(DETECTOR_ATTRIBUTES):
            scores[attr].append(probs[k])
            labels[attr].append(target[k])
        predictions.append({"id_a": id_a, "id_b": id_b,
                            "scores": [float(p) for p in probs],
                            "targets": [float(t) for t in target]})
    aps = {attr: average_precision(scores[attr], labels[attr])
           for attr in DETECTOR_ATTRIBUTES}
    return SwapProtocolResult(aps=aps, pairing=pairing,
                              predictions=predictions,
                              upper_bound=model is None, seed=seed)


def constant_score_aps(records, pairing, score: float = 0.5) -> dict:
    """APs of the know-nothing baseline that scores every image ``score``."""
    by_id = {rec.record_id: rec for rec in records}
    aps = {}
    for k, attr in enumerate(DETECTOR_ATTRIBUTES):
        labels = [attribute_targets(by_id[pairing[id_a]].caption)[k]
                  for id_a in sorted(pairing)]
        aps[attr] = average_precision([score] * len(labels), labels)
    return aps


def pipeline_swap_model(pipeline: Pipeline):
    """Adapter: full two-stage pipeline as a swap-protocol model."""
    def model(record: PersonRecord, caption: str, seed: int) -> ImageRGB:
        _, image = pipeline.run(record.image, record.segmap, caption,
                                derive_stage_seeds(seed), record.attributes)
        return image
    return model


def one_step_swap_model(checkpoint):
    """Adapter: a One-Step checkpoint as a swap-protocol model."""
    from .baselines import one_step_generate, unmerged_prior

    gen, _, encoder, vocab = restore_models(checkpoint)
    use_merged = gen.variant == "8-4"

    def model(record: PersonRecord, caption: str, seed: int) -> ImageRGB:
        if use_merged:
            prior = build_spatial_constraint(record).probs
        else:
            prior = unmerged_prior(record.segmap)
        d = build_design_coding(record, encode_text(encoder, caption, vocab))
        return one_step_generate(LatentNoise.draw(seed), prior, d, gen)
    return model


def noncomp_swap_model(checkpoint):
    """Adapter: the Non-Compositional checkpoint as a swap-protocol model."""
    from .baselines import noncomp_generate

    gen, _, encoder, vocab = restore_models(checkpoint)

    def model(record: PersonRecord, caption: str, seed: int) -> ImageRGB:
        d = build_design_coding(record, encode_text(encoder, caption, vocab))
        return noncomp_generate(LatentNoise.draw(seed), record.segmap, d, gen)
    return model


# --- constraint adherence ----------------------------------------------

HEAD_CONSTRAINT_CLASSES = (0, 1, 2)  # background, hair, face


def constraint_iou(segmap: SegMap, constraint) -> float:
    """Mean IoU of {background, hair, face} between a map and a constraint.

    The 8x8 constraint is argmaxed and nearest-neighbor-grown to the map
    resolution; the map's 7 labels are merged to the 4 constraint labels.
    """
    probs = constraint.probs if hasattr(constraint, "probs") else np.asarray(constraint)
    r = segmap.height
    scale = r // probs.shape[0]
    truth = np.argmax(probs, axis=2)
    truth = np.repeat(np.repeat(truth, scale, axis=0), scale, axis=1)
    pred = np.argmax(merge_labels(segmap), axis=2)
    ious = []
    for c in HEAD_CONSTRAINT_CLASSES:
        p, t = pred == c, truth == c
        union = np.logical_or(p, t).sum()
        if union == 0:
            continue
        ious.append(np.logical_and(p, t).sum() / union)
    return float(np.mean(ious)) if ious else 1.0


# --- human-study arithmetic --------------------------------------------

def ranking_stats(ratings) -> dict:
    """Per-method mean rank, population std, and rank-frequency table.

    ``ratings`` is a list of per-item dicts {method: rank}; each item's
    ranks must form a permutation of 1..#methods.
    """
    ratings = list(ratings)
    if not ratings:
        raise ValueError("no ratings")
    methods = sorted(ratings[0])
    want = set(range(1, len(methods) + 1))
    for i, item in enumerate(ratings):
        if sorted(item) != methods:
            raise InvalidPermutation(
                f"item {i} ranks methods {sorted(item)}, expected {methods}")
        got = {int(v) for v in item.values()}
        if got != want:
            raise InvalidPermutation(
                f"item {i} ranks {sorted(got)} are not a permutation of "
                f"1..{len(methods)}")
    out = {}
    for method in methods:
        ranks = np.array([float(item[method]) for item in ratings])
        out[method] = {
            "mean": float(ranks.mean()),
            "std": float(ranks.std()),  # population std, ddof=0
            "frequencies": {int(r): int(np.sum(ranks == r)) for r in sorted(want)},
        }
    return out


def load_ratings_csv(path) -> list:
    """CSV rows (item_id, method, rank) -> per-item rating dicts."""
    items = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            items.setdefault(row["item_id"], {})[row["method"]] = int(row["rank"])
    return [items[k] for k in sorted(items)]


# --- interpolation walks ------------------------------------------------

WALK_MODES = ("shape", "texture", "both")


@dataclass(frozen=True)
class WalkEndpoint:
    """Everything that pins down one generation for interpolation."""

    image: ImageRGB
    segmap: SegMap
    caption: str
    seed: int
    attributes: Attributes = Attributes()


def _raw_shape(gen, z: np.ndarray, d: np.ndarray,
               constraint: np.ndarray) -> np.ndarray:
    with torch.no_grad():
        probs = gen(to_vec(z), to_vec(d), to_chw(constraint))
    arr = np.transpose(probs.squeeze(0).numpy().astype(np.float64), (1, 2, 0))
    return arr / arr.sum(axis=2, keepdims=True)


def _raw_channels(gen, z: np.ndarray, d: np.ndarray,
                  segmap: np.ndarray) -> np.ndarray:
    with torch.no_grad():
        ch = gen(to_vec(z), to_vec(d), to_chw(segmap))
    return np.transpose(ch.squeeze(0).numpy().astype(np.float64), (0, 2, 3, 1))


def _endpoint_inputs(pipeline: Pipeline, ep: WalkEndpoint) -> dict:
    record = PersonRecord(image=ep.image, segmap=ep.segmap, caption=ep.caption,
                          attributes=ep.attributes)
    seed_s, seed_i = derive_stage_seeds(ep.seed)
    return {
        "z_s": LatentNoise.draw(seed_s).values,
        "z_i": LatentNoise.draw(seed_i).values,
        "v_s": encode_text(pipeline.shape_encoder, ep.caption, pipeline.vocab),
        "v_i": encode_text(pipeline.image_encoder, ep.caption, pipeline.vocab),
        "attrs": extract_attributes(record),
        "constraint": build_spatial_constraint(record).probs,
        "image": ep.image.pixels,
        "segmap": ep.segmap.probs,
    }


def interpolation_walk(pipeline: Pipeline, endpoint_a: WalkEndpoint,
                       endpoint_b: WalkEndpoint, mode: str,
                       steps: int) -> list:
    """Linear walk between two generations -> list of final images.

    mode "shape": only stage-one inputs (z_S || v_S) move; the texture
    channels are computed once from endpoint A and re-composed under
    each step's map. mode "texture": the map and masks stay at endpoint
    A while stage-two inputs (z_I || v_I) move. mode "both": every
    input moves, including the wearer context, so the walk's ends
    reproduce the two endpoint generations exactly.

    Where a mode holds something fixed, the fixed value comes from
    endpoint A.
    """
    if mode not in WALK_MODES:
        raise ValueError(f"mode must be one of {WALK_MODES}")
    if steps < 2:
        raise ValueError("steps must be at least 2")
    pipeline.shape_gen.eval()
    pipeline.image_gen.eval()
    a = _endpoint_inputs(pipeline, endpoint_a)
    b = _endpoint_inputs(pipeline, endpoint_b)

    move_shape = mode in ("shape", "both")
    move_texture = mode in ("texture", "both")
    move_context = mode == "both"

    def value(key, lam, moving):
        if not moving:
            return a[key]
        return (1.0 - lam) * a[key] + lam * b[key]

    def map_at(lam):
        attrs = value("attrs", lam, move_context)
        probs = _raw_shape(
            pipeline.shape_gen,
            value("z_s", lam, move_shape),
            np.concatenate([attrs, value("v_s", lam, move_shape)]),
            value("constraint", lam, move_context))
        return one_hot_map(argmax_labels(probs))

    masks_a = map_at(0.0)
    fixed_channels = None
    if not move_texture:
        fixed_channels = _raw_channels(
            pipeline.image_gen, a["z_i"],
            np.concatenate([a["attrs"], a["v_i"]]), masks_a)

    frames = []
    for lam in np.linspace(0.0, 1.0, steps):
        masks = map_at(lam) if move_shape else masks_a
        if move_texture:
            attrs = value("attrs", lam, move_context)
            channels = _raw_channels(
                pipeline.image_gen,
                value("z_i", lam, True),
                np.concatenate([attrs, value("v_i", lam, True)]),
                masks)
        else:
            channels = fixed_channels
        composed = compose(channels, masks, mode="hard")
        context_image = ImageRGB(value("image", lam, move_context))
        context_map = SegMap(value("segmap", lam, move_context))
        frames.append(replace_head(composed, context_image, context_map))
    return frames
