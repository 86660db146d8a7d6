"""Deterministic paper-doll dataset: rendered figures with exact labels.

Each record is a procedurally drawn person built from pixel-snapped,
axis-aligned rectangles painted in a fixed z-order. Because the painter
and the geometry share the same integer rectangles, per-class pixel
counts can be verified against exact polygon algebra.

On-disk dataset layout (bit-exact given ``(count, seed)``):

    DATASET_VERSION          format version, currently "1"
    captions.jsonl           one record per line: id, caption, attributes
    img_XXXXX.png            8-bit RGB photo
    seg_XXXXX.png            8-bit palette PNG, indices 0-6 in label order
"""

from __future__ import annotations

import dataclasses
import io
import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .core_types import (
    Attributes,
    ImageRGB,
    LABELS,
    NUM_LABELS,
    PersonRecord,
    SegMap,
    one_hot_map,
)
from .errors import CaptionMissing, DatasetError, MissingSegmentation, PaletteViolation

DATASET_VERSION = "1"

#: Visualization/palette colors for the 7 labels, in label order.
PALETTE = (
    (232, 232, 232),  # background
    (64, 40, 20),     # hair
    (240, 200, 160),  # face
    (208, 32, 32),    # upper-clothes
    (32, 64, 192),    # pants/shorts
    (240, 160, 128),  # legs
    (192, 128, 96),   # arms
)

GARMENT_COLORS = {
    "red": (0.85, 0.12, 0.12),
    "green": (0.10, 0.65, 0.20),
    "blue": (0.15, 0.25, 0.80),
    "yellow": (0.92, 0.85, 0.15),
    "white": (0.95, 0.95, 0.95),
    "black": (0.08, 0.08, 0.08),
    "purple": (0.55, 0.15, 0.65),
    "orange": (0.95, 0.55, 0.10),
}

HAIR_COLORS = {
    "black": (0.10, 0.09, 0.08),
    "brown": (0.32, 0.20, 0.11),
}

BACKGROUND_COLOR = (0.92, 0.92, 0.92)
SUNGLASSES_COLOR = (0.05, 0.05, 0.05)

SLEEVES = ("short", "long")
BOTTOMS = ("shorts", "pants", "skirt")
ARM_POSES = ("down", "out")

#: Fraction of the raster height treated as the elbow line in tests.
ELBOW_Y = 0.40


@dataclass(frozen=True)
class DollSpec:
    """Full parameterization of one doll; same seed -> same spec."""

    seed: int
    gender_female: bool
    long_hair: bool
    sunglasses: bool
    hat: bool
    arm_pose: str          # "down" | "out"
    leg_spread: float      # inner gap between legs, in [0.02, 0.09]
    body_width: float      # width scale factor, in [0.90, 1.10]
    body_height: float     # height scale factor, in [0.88, 1.00]
    sleeve: str            # "short" | "long"
    bottom: str            # "shorts" | "pants" | "skirt"
    top_color: str
    bottom_color: str
    hair_color: str
    skin_tone: float       # in [0.50, 0.85]

    def __post_init__(self):
        if self.sleeve not in SLEEVES or self.bottom not in BOTTOMS:
            raise ValueError(f"bad garment: {self.sleeve!r}/{self.bottom!r}")
        if self.arm_pose not in ARM_POSES:
            raise ValueError(f"bad arm pose: {self.arm_pose!r}")
        if not (0.02 <= self.leg_spread <= 0.09):
            raise ValueError("leg_spread outside [0.02, 0.09]")
        if not (0.90 <= self.body_width <= 1.10):
            raise ValueError("body_width outside [0.90, 1.10]")
        if not (0.88 <= self.body_height <= 1.00):
            raise ValueError("body_height outside [0.88, 1.00]")
        if not (0.50 <= self.skin_tone <= 0.85):
            raise ValueError("skin_tone outside [0.50, 0.85]")
        if self.top_color not in GARMENT_COLORS or self.bottom_color not in GARMENT_COLORS:
            raise ValueError("unknown garment color")
        if self.hair_color not in HAIR_COLORS:
            raise ValueError("unknown hair color")


def random_spec(seed: int) -> DollSpec:
    """Draw a spec from the documented parameter ranges."""
    rng = np.random.default_rng(seed)
    colors = sorted(GARMENT_COLORS)
    return DollSpec(
        seed=seed,
        gender_female=bool(rng.integers(2)),
        long_hair=bool(rng.integers(2)),
        sunglasses=bool(rng.integers(2)),
        hat=bool(rng.random() < 0.25),
        arm_pose=ARM_POSES[rng.integers(len(ARM_POSES))],
        leg_spread=float(rng.uniform(0.02, 0.09)),
        body_width=float(rng.uniform(0.90, 1.10)),
        body_height=float(rng.uniform(0.88, 1.00)),
        sleeve=SLEEVES[rng.integers(len(SLEEVES))],
        bottom=BOTTOMS[rng.integers(len(BOTTOMS))],
        top_color=colors[rng.integers(len(colors))],
        bottom_color=colors[rng.integers(len(colors))],
        hair_color=sorted(HAIR_COLORS)[rng.integers(len(HAIR_COLORS))],
        skin_tone=float(rng.uniform(0.50, 0.85)),
    )


def caption_for(spec: DollSpec) -> str:
    who = "lady" if spec.gender_female else "man"
    if spec.bottom == "skirt":
        bottom_phrase = f"a {spec.bottom_color} skirt"
    else:
        bottom_phrase = f"{spec.bottom_color} {spec.bottom}"
    return (f"a {who} in a {spec.top_color} top with {spec.sleeve} sleeves "
            f"and {bottom_phrase}")


_CAPTION_RE = re.compile(
    r"^a (lady|man) in a (\w+) top with (long|short) sleeves "
    r"and (?:a )?(\w+) (pants|shorts|skirt)$"
)


def parse_caption(caption: str) -> dict:
    """Invert the caption template; raises ValueError on non-template text."""
    m = _CAPTION_RE.match(caption.strip().lower())
    if not m:
        raise ValueError(f"caption does not match the template: {caption!r}")
    who, top_color, sleeve, bottom_color, bottom = m.groups()
    return {
        "gender_female": who == "lady",
        "top_color": top_color,
        "sleeve": sleeve,
        "bottom_color": bottom_color,
        "bottom": bottom,
    }


def contradict_caption(caption: str):
    """Same wearer, deliberately different garments; None off-template.

    Every garment field changes (sleeve flips, bottom and both colors
    cycle) while the wearer words stay, so the result disagrees with the
    original outfit everywhere but agrees on who is wearing it.
    """
    try:
        fields = parse_caption(caption)
    except ValueError:
        return None
    colors = sorted(GARMENT_COLORS)

    def next_color(name: str) -> str:
        at = colors.index(name) if name in colors else -1
        return colors[(at + 1) % len(colors)]

    who = "lady" if fields["gender_female"] else "man"
    sleeve = "short" if fields["sleeve"] == "long" else "long"
    bottom = BOTTOMS[(BOTTOMS.index(fields["bottom"]) + 1) % len(BOTTOMS)]
    bottom_color = next_color(fields["bottom_color"])
    if bottom == "skirt":
        bottom_phrase = f"a {bottom_color} skirt"
    else:
        bottom_phrase = f"{bottom_color} {bottom}"
    return (f"a {who} in a {next_color(fields['top_color'])} top with "
            f"{sleeve} sleeves and {bottom_phrase}")


# --- geometry -----------------------------------------------------------

def _skin_color(tone: float) -> tuple:
    return (tone, tone * 0.82, tone * 0.66)


def doll_shapes(spec: DollSpec, resolution: int):
    """The doll as a painter's list of (label, rect, color) in draw order.

    Rects are integer pixel boxes (x0, y0, x1, y1), half-open on the
    right/bottom, already snapped to the raster. Later entries overdraw
    earlier ones; the same list drives both rasterization and the exact
    area computation used by tests.
    """
    r = resolution
    wf, hf = spec.body_width, spec.body_height
    cx = 0.5

    def sx(half_width):
        # symmetric pair of x-extents is derived from these two helpers
        return half_width * wf

    def sy(f):
        return 0.05 + (f - 0.05) * hf

    def box(x_lo, y_lo, x_hi, y_hi):
        x0, x1 = round(x_lo * r), round(x_hi * r)
        y0, y1 = round(sy(y_lo) * r), round(sy(y_hi) * r)
        return (max(x0, 0), max(y0, 0), min(x1, r), min(y1, r))

    def centered(hw, y_lo, y_hi):
        return box(cx - sx(hw), y_lo, cx + sx(hw), y_hi)

    def mirrored(x_in, x_out, y_lo, y_hi):
        # pair of boxes at +/- x from the center line
        left = box(cx - sx(x_out), y_lo, cx - sx(x_in), y_hi)
        right = box(cx + sx(x_in), y_lo, cx + sx(x_out), y_hi)
        return [left, right]

    skin = _skin_color(spec.skin_tone)
    top_rgb = GARMENT_COLORS[spec.top_color]
    bottom_rgb = GARMENT_COLORS[spec.bottom_color]
    hair_rgb = HAIR_COLORS[spec.hair_color]
    lab = {name: i for i, name in enumerate(LABELS)}

    shapes = []

    def add(label, boxes, color):
        if isinstance(boxes, tuple):
            boxes = [boxes]
        for b in boxes:
            if b[2] > b[0] and b[3] > b[1]:
                shapes.append((label, b, color))

    add(lab["hair"], centered(0.115, 0.06, 0.13), hair_rgb)
    if spec.hat:
        # hat pixels keep the hair label; only the color changes
        add(lab["hair"], centered(0.13, 0.05, 0.10), GARMENT_COLORS[spec.bottom_color])
    add(lab["face"], centered(0.08, 0.11, 0.24), skin)
    if spec.sunglasses:
        add(lab["face"], centered(0.075, 0.145, 0.175), SUNGLASSES_COLOR)
    add(lab["face"], centered(0.028, 0.24, 0.275), skin)  # neck

    # legs, then the bottom garment over their upper part
    half_gap = spec.leg_spread / 2.0
    leg_w = 0.065
    add(lab["legs"], mirrored(half_gap, half_gap + leg_w, 0.54, 0.95), skin)

    pad = 0.015
    if spec.bottom == "skirt":
        for hw, y0, y1 in ((0.150, 0.54, 0.60), (0.175, 0.60, 0.66),
                           (0.200, 0.66, 0.72), (0.225, 0.72, 0.78)):
            add(lab["pants/shorts"], centered(hw, y0, y1), bottom_rgb)
    else:
        y_hem = 0.66 if spec.bottom == "shorts" else 0.92
        add(lab["pants/shorts"],
            mirrored(max(half_gap - pad, 0.0), half_gap + leg_w + pad, 0.54, y_hem),
            bottom_rgb)
        add(lab["pants/shorts"], centered(half_gap + leg_w + pad, 0.54, 0.60), bottom_rgb)

    add(lab["upper-clothes"], centered(0.14, 0.27, 0.54), top_rgb)

    if spec.arm_pose == "down":
        arm_boxes = mirrored(0.145, 0.205, 0.275, 0.52)
        sleeve_y1 = 0.52 if spec.sleeve == "long" else 0.365
        sleeve_boxes = mirrored(0.145, 0.205, 0.275, sleeve_y1)
    else:
        arm_boxes = mirrored(0.14, 0.31, 0.275, 0.335)
        sleeve_x1 = 0.31 if spec.sleeve == "long" else 0.20
        sleeve_boxes = mirrored(0.14, sleeve_x1, 0.275, 0.335)
    add(lab["arms"], arm_boxes, skin)
    add(lab["upper-clothes"], sleeve_boxes, top_rgb)

    if spec.long_hair:
        add(lab["hair"], mirrored(0.085, 0.125, 0.13, 0.42), hair_rgb)

    return shapes


def render_doll(spec: DollSpec, resolution: int = 128) -> PersonRecord:
    """Rasterize a DollSpec into a PersonRecord with exact per-pixel labels."""
    r = resolution
    labels = np.zeros((r, r), dtype=np.int64)
    colors = np.empty((r, r, 3), dtype=np.float64)
    colors[:] = BACKGROUND_COLOR
    for label, (x0, y0, x1, y1), color in doll_shapes(spec, r):
        labels[y0:y1, x0:x1] = label
        colors[y0:y1, x0:x1] = color
    return PersonRecord(
        image=ImageRGB(colors * 2.0 - 1.0),
        segmap=SegMap(one_hot_map(labels)),
        caption=caption_for(spec),
        attributes=Attributes(
            gender=spec.gender_female,
            long_hair=spec.long_hair,
            sunglasses=spec.sunglasses,
            hat=spec.hat,
        ),
    )


# --- dataset I/O --------------------------------------------------------

def image_to_png_bytes(image: ImageRGB) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(image.to_uint8(), mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def image_from_png_bytes(data: bytes) -> ImageRGB:
    with Image.open(io.BytesIO(data)) as im:
        return ImageRGB.from_uint8(np.asarray(im.convert("RGB")))


def segmap_to_png_bytes(segmap: SegMap) -> bytes:
    seg = Image.fromarray(
        np.argmax(segmap.probs, axis=2).astype(np.uint8), mode="P")
    seg.putpalette(_flat_palette())
    buf = io.BytesIO()
    seg.save(buf, format="PNG")
    return buf.getvalue()


def segmap_from_png_bytes(data: bytes) -> SegMap:
    with Image.open(io.BytesIO(data)) as im:
        if im.mode != "P":
            raise PaletteViolation("segmentation PNG must be palette-mode")
        indices = np.asarray(im)
    if indices.max() >= NUM_LABELS:
        raise PaletteViolation(
            f"segmentation PNG contains label index {indices.max()} (valid: 0-6)")
    return SegMap(one_hot_map(indices.astype(np.int64)))


def _flat_palette() -> list:
    flat = []
    for rgb in PALETTE:
        flat.extend(rgb)
    return flat


def _record_seeds(count: int, seed: int) -> list:
    children = np.random.SeedSequence(seed).spawn(count)
    return [int(c.generate_state(1, np.uint64)[0]) for c in children]


def generate_dataset(count: int, seed: int, out_dir=None,
                     resolution: int = 128) -> list:
    """Render ``count`` records; optionally write them in the dataset format.

    ``(count, seed)`` fully determines every byte on disk: record seeds
    come from hashing the master seed, rendering is deterministic, and
    the writers below avoid timestamps.
    """
    seeds = _record_seeds(count, seed)
    records = []
    for i, record_seed in enumerate(seeds):
        spec = random_spec(record_seed)
        record = render_doll(spec, resolution)
        records.append(dataclasses.replace(record, record_id=f"{i:05d}"))
    if out_dir is not None:
        write_dataset(records, out_dir)
    return records


def write_dataset(records, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "DATASET_VERSION").write_text(DATASET_VERSION + "\n")
    lines = []
    for record in records:
        rid = record.record_id
        Image.fromarray(record.image.to_uint8(), mode="RGB").save(out / f"img_{rid}.png")
        seg = Image.fromarray(
            np.argmax(record.segmap.probs, axis=2).astype(np.uint8), mode="P")
        seg.putpalette(_flat_palette())
        seg.save(out / f"seg_{rid}.png")
        a = record.attributes
        lines.append(json.dumps({
            "id": rid,
            "caption": record.caption,
            "attributes": {"gender": a.gender, "long_hair": a.long_hair,
                           "sunglasses": a.sunglasses, "hat": a.hat},
        }, sort_keys=True))
    (out / "captions.jsonl").write_text("\n".join(lines) + "\n")


def load_dataset(path) -> list:
    """Read and validate a dataset directory; errors name the bad file."""
    root = Path(path)
    version_file = root / "DATASET_VERSION"
    if not version_file.exists():
        raise DatasetError(f"not a dataset directory (no {version_file})")
    version = version_file.read_text().strip()
    if version != DATASET_VERSION:
        raise DatasetError(f"unsupported dataset version {version!r} in {version_file}")

    captions_file = root / "captions.jsonl"
    if not captions_file.exists():
        raise CaptionMissing(f"missing {captions_file}")
    meta = {}
    for line_no, line in enumerate(captions_file.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        entry = json.loads(line)
        if not entry.get("caption"):
            raise CaptionMissing(f"{captions_file}:{line_no} has no caption")
        meta[entry["id"]] = entry

    for img_file in sorted(root.glob("img_*.png")):
        rid = img_file.stem[len("img_"):]
        if rid not in meta:
            raise CaptionMissing(f"{img_file} has no caption entry")

    records = []
    for rid in sorted(meta):
        img_file = root / f"img_{rid}.png"
        seg_file = root / f"seg_{rid}.png"
        if not img_file.exists():
            raise DatasetError(f"missing image file {img_file}")
        if not seg_file.exists():
            raise MissingSegmentation(f"missing segmentation file {seg_file}")
        with Image.open(img_file) as im:
            if im.mode != "RGB":
                raise DatasetError(f"{img_file} is not an RGB image")
            pixels = np.asarray(im)
        with Image.open(seg_file) as sm:
            if sm.mode != "P":
                raise PaletteViolation(f"{seg_file} is not a palette image")
            indices = np.asarray(sm)
        if indices.max() >= NUM_LABELS:
            raise PaletteViolation(
                f"{seg_file} contains label index {indices.max()} (valid: 0-6)")
        if indices.shape != pixels.shape[:2]:
            raise DatasetError(f"{seg_file} size differs from {img_file}")
        attrs = meta[rid].get("attributes", {})
        records.append(PersonRecord(
            image=ImageRGB.from_uint8(pixels),
            segmap=SegMap(one_hot_map(indices.astype(np.int64))),
            caption=meta[rid]["caption"],
            attributes=Attributes(
                gender=bool(attrs.get("gender", False)),
                long_hair=bool(attrs.get("long_hair", False)),
                sunglasses=bool(attrs.get("sunglasses", False)),
                hat=bool(attrs.get("hat", False)),
            ),
            record_id=rid,
        ))
    return records
