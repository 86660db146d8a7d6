"""Command-line entry point for the outfit synthesis toolkit.

Subcommands cover dataset generation, stage training, one-shot
inference, protocol evaluation, figure-style grids, interpolation
walks, and the HTTP service. Every subcommand is deterministic given
an explicit --seed.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from .core_types import SegMap, argmax_labels, one_hot_map
from .errors import FashionSynthError
from .evaluation import (
    interpolation_walk,
    load_ratings_csv,
    noncomp_swap_model,
    one_step_swap_model,
    pipeline_swap_model,
    ranking_stats,
    run_swap_protocol,
    train_detector,
    WalkEndpoint,
)
from .synth_data import (
    generate_dataset,
    image_from_png_bytes,
    image_to_png_bytes,
    load_dataset,
    segmap_from_png_bytes,
    segmap_to_png_bytes,
)
from .training import (
    derive_stage_seeds,
    load_checkpoint,
    Pipeline,
    train_stage,
    TrainConfig,
)

HOME_ENV = "FASHION_SYNTH_HOME"

# public names -> internal stage names
STAGE_ALIASES = {
    "shape": "shape",
    "image": "image",
    "one-step-8-7": "one-step-8-7",
    "one-step-8-4": "one-step-8-4",
    "non-comp": "non-compositional",
    "non-compositional": "non-compositional",
}

CONFIG_KEYS = ("stage", "data", "out", "epochs", "batch_size",
               "learning_rate", "resolution", "seed")


class UsageError(Exception):
    """Bad flags or config content; maps to exit code 2."""


def home_dir() -> Path:
    return Path(os.environ.get(HOME_ENV, Path.home() / ".fashion-synth"))


def default_data_dir() -> Path:
    return home_dir() / "data"


def default_checkpoint_dir() -> Path:
    return home_dir() / "checkpoints"


def read_config_file(path) -> dict:
    """Parse a flat key=value config file ('#' starts a comment)."""
    values = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise UsageError(
                f"{path}:{lineno}: unknown key {key!r} (valid: {', '.join(CONFIG_KEYS)})")
        values[key] = value
    return values


def _resolve_stage(name) -> str:
    if name not in STAGE_ALIASES:
        raise UsageError(
            f"unknown stage {name!r} (valid: {', '.join(sorted(set(STAGE_ALIASES)))})")
    return STAGE_ALIASES[name]


def load_pipeline(checkpoint_dir) -> Pipeline:
    ckpt_dir = Path(checkpoint_dir)
    return Pipeline(ckpt_dir / "shape_final.zip", ckpt_dir / "image_final.zip")


def _write_png(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)


def tile_images(cells, pad: int = 2) -> np.ndarray:
    """Tile rows of uint8 RGB arrays into one grid with white separators."""
    rows = [list(row) for row in cells]
    h, w = rows[0][0].shape[:2]
    n_rows, n_cols = len(rows), len(rows[0])
    out = np.full((n_rows * h + (n_rows - 1) * pad,
                   n_cols * w + (n_cols - 1) * pad, 3), 255, dtype=np.uint8)
    for i, row in enumerate(rows):
        for j, cell in enumerate(row):
            y, x = i * (h + pad), j * (w + pad)
            out[y:y + h, x:x + w] = cell
    return out


# --- subcommand handlers ------------------------------------------------

def cmd_synth_data(args) -> int:
    out_dir = Path(args.out)
    generate_dataset(args.count, args.seed, out_dir=out_dir,
                     resolution=args.resolution)
    print(f"wrote {args.count} records to {out_dir}")
    return 0


def cmd_train(args) -> int:
    merged = {"data": str(default_data_dir()),
              "out": str(default_checkpoint_dir())}
    if args.config:
        merged.update(read_config_file(args.config))
    for key in CONFIG_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            merged[key] = flag
    if "stage" not in merged:
        raise UsageError("--stage is required (flag or config file)")
    stage = _resolve_stage(str(merged["stage"]))
    try:
        config = TrainConfig(
            stage=stage,
            epochs=int(merged.get("epochs", 1)),
            batch_size=int(merged.get("batch_size", 16)),
            learning_rate=float(merged.get("learning_rate", 2e-4)),
            resolution=int(merged.get("resolution", 32)),
            seed=int(merged.get("seed", 0)),
            dataset_dir=str(merged["data"]),
            checkpoint_dir=str(merged["out"]),
        )
    except ValueError as exc:
        raise UsageError(str(exc))
    records = load_dataset(config.dataset_dir)
    Path(config.checkpoint_dir).mkdir(parents=True, exist_ok=True)
    ckpt = train_stage(config, records)
    final = Path(config.checkpoint_dir) / f"{stage}_final.zip"
    last = ckpt.loss_history[-1] if ckpt.loss_history else {}
    print(f"trained stage {stage} for {config.epochs} epochs -> {final}")
    if last:
        print(f"final losses: D {last['loss_d']:.4f}  G {last['loss_g']:.4f}")
    return 0


def cmd_infer(args) -> int:
    pipeline = load_pipeline(args.checkpoints)
    image = image_from_png_bytes(Path(args.image).read_bytes())
    segmap = segmap_from_png_bytes(Path(args.segmap).read_bytes())
    seeds = derive_stage_seeds(args.seed)
    map_soft, final = pipeline.run(image, segmap, args.caption, seeds)
    out_dir = Path(args.out)
    map_hard = SegMap(one_hot_map(argmax_labels(map_soft)))
    _write_png(out_dir / "shape_map.png", segmap_to_png_bytes(map_hard))
    _write_png(out_dir / "image.png", image_to_png_bytes(final))
    print(f"wrote {out_dir / 'shape_map.png'} and {out_dir / 'image.png'}")
    return 0


def _swap_model(name, checkpoint_dir):
    ckpt_dir = Path(checkpoint_dir)
    if name == "upper-bound":
        return None
    if name == "pipeline":
        return pipeline_swap_model(load_pipeline(ckpt_dir))
    stage = _resolve_stage(name)
    ckpt = load_checkpoint(ckpt_dir / f"{stage}_final.zip")
    if stage == "non-compositional":
        return noncomp_swap_model(ckpt)
    return one_step_swap_model(ckpt)


def cmd_eval(args) -> int:
    if args.protocol == "swap":
        records = load_dataset(args.data)
        detector = train_detector(records, seed=args.seed,
                                  epochs=args.detector_epochs)
        model = _swap_model(args.model, args.checkpoints)
        result = run_swap_protocol(model, records, detector, args.seed)
        report = result.report_json()
        print(result.report_text())
    else:
        ratings = load_ratings_csv(args.ratings)
        stats = ranking_stats(ratings)
        report = json.dumps(stats, indent=2, sort_keys=True)
        print(report)
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(report + "\n", encoding="utf-8")
        print(f"wrote {out}")
    return 0


def cmd_grid(args) -> int:
    records = load_dataset(args.data)
    pipeline = load_pipeline(args.checkpoints)
    rows, cols = args.rows, args.cols
    if len(records) < max(rows, cols, rows * cols if args.mode != "matrix" else 0):
        raise UsageError(
            f"dataset has {len(records)} records; grid needs more variety")

    def cell(wearer, caption, index):
        seeds = derive_stage_seeds(args.seed + index)
        _, final = pipeline.run(wearer.image, wearer.segmap, caption, seeds,
                                wearer.attributes)
        return final.to_uint8()

    grid = []
    for i in range(rows):
        row = []
        for j in range(cols):
            index = i * cols + j
            if args.mode == "matrix":
                wearer, caption = records[i], records[j].caption
            elif args.mode == "same-wearer":
                wearer, caption = records[0], records[index].caption
            else:  # same-text
                wearer, caption = records[index], records[0].caption
            row.append(cell(wearer, caption, index))
        grid.append(row)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(tile_images(grid)).save(out, format="PNG")
    print(f"wrote {rows}x{cols} {args.mode} grid to {out}")
    return 0


def cmd_interpolate(args) -> int:
    records = load_dataset(args.data)
    if max(args.index_a, args.index_b) >= len(records):
        raise UsageError(
            f"dataset has {len(records)} records; indices out of range")
    pipeline = load_pipeline(args.checkpoints)

    def endpoint(record, caption, seed):
        return WalkEndpoint(image=record.image, segmap=record.segmap,
                            caption=caption or record.caption, seed=seed,
                            attributes=record.attributes)

    a = endpoint(records[args.index_a], args.caption_a, args.seed_a)
    b = endpoint(records[args.index_b], args.caption_b, args.seed_b)
    frames = interpolation_walk(pipeline, a, b, args.mode, args.steps)
    out_dir = Path(args.out)
    for i, frame in enumerate(frames):
        _write_png(out_dir / f"step_{i:02d}.png", image_to_png_bytes(frame))
    print(f"wrote {len(frames)} frames to {out_dir}")
    return 0


def cmd_serve(args) -> int:
    from .service import run_server

    run_server(checkpoint_dir=args.checkpoints, store_path=args.store,
               host=args.host, port=args.port)
    return 0


# --- parser -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fashion-synth",
        description="Text-conditioned outfit synthesis toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-data", help="generate a paper-doll dataset")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--resolution", type=int, default=32,
                   choices=(32, 64, 128))
    p.set_defaults(func=cmd_synth_data)

    p = sub.add_parser(
        "train", help="train one stage or baseline",
        epilog="config file keys (key=value, one per line): "
               + ", ".join(CONFIG_KEYS) + "; flags override the file")
    p.add_argument("--stage", choices=sorted(set(STAGE_ALIASES)))
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--data", help="dataset directory")
    p.add_argument("--out", help="checkpoint directory")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--learning-rate", type=float, dest="learning_rate")
    p.add_argument("--resolution", type=int, choices=(32, 64, 128))
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="run the two-stage pipeline once")
    p.add_argument("--image", required=True)
    p.add_argument("--segmap", required=True)
    p.add_argument("--caption", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--checkpoints", default=str(default_checkpoint_dir()))
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="run an evaluation protocol")
    p.add_argument("--protocol", choices=("swap", "rank"), required=True)
    p.add_argument("--data", default=str(default_data_dir()))
    p.add_argument("--checkpoints", default=str(default_checkpoint_dir()))
    p.add_argument("--model", default="pipeline",
                   choices=("pipeline", "one-step-8-7", "one-step-8-4",
                            "non-comp", "upper-bound"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--detector-epochs", type=int, default=8,
                   dest="detector_epochs")
    p.add_argument("--ratings", help="CSV of (item_id, method, rank)")
    p.add_argument("--out", help="write the JSON report here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("grid", help="emit a figure-style image grid")
    p.add_argument("--mode", choices=("matrix", "same-wearer", "same-text"),
                   required=True)
    p.add_argument("--data", default=str(default_data_dir()))
    p.add_argument("--checkpoints", default=str(default_checkpoint_dir()))
    p.add_argument("--rows", type=int, default=4)
    p.add_argument("--cols", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("interpolate", help="walk between two generations")
    p.add_argument("--mode", choices=("shape", "texture", "both"),
                   required=True)
    p.add_argument("--data", default=str(default_data_dir()))
    p.add_argument("--checkpoints", default=str(default_checkpoint_dir()))
    p.add_argument("--index-a", type=int, default=0, dest="index_a")
    p.add_argument("--index-b", type=int, default=1, dest="index_b")
    p.add_argument("--caption-a", dest="caption_a")
    p.add_argument("--caption-b", dest="caption_b")
    p.add_argument("--seed-a", type=int, default=0, dest="seed_a")
    p.add_argument("--seed-b", type=int, default=1, dest="seed_b")
    p.add_argument("--steps", type=int, default=5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_interpolate)

    p = sub.add_parser("serve", help="start the HTTP inference service")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--checkpoints", default=str(default_checkpoint_dir()))
    p.add_argument("--store", default=None,
                   help="session store path (default: <home>/sessions.db)")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except FashionSynthError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
