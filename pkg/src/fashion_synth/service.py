"""HTTP inference service backing the design-studio UI.

Endpoints: POST /api/session, POST /api/generate, POST /api/interpolate,
GET /api/history. Checkpoints load once at startup and stay immutable;
generations persist in a single-file sqlite store so history survives
restarts. All PNG payloads travel base64-encoded in JSON.
"""
from __future__ import annotations

import base64
import hashlib
import secrets
import sqlite3
import threading
import time
import uuid
from datetime import datetime, timezone
from pathlib import Path

import torch
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .core_types import SegMap, argmax_labels, one_hot_map
from .errors import FashionSynthError, MissingCheckpoint, StageMismatch
from .evaluation import interpolation_walk, WalkEndpoint
from .synth_data import (
    image_from_png_bytes,
    image_to_png_bytes,
    segmap_from_png_bytes,
    segmap_to_png_bytes,
)
from .training import derive_stage_seeds, Pipeline

MAX_BODY_BYTES = 8 * 1024 * 1024
MAX_WALK_STEPS = 64
WALK_MODES = ("shape", "texture", "both")

_SCHEMA = """
CREATE TABLE IF NOT EXISTS sessions (
    session_id TEXT PRIMARY KEY,
    created_ns INTEGER NOT NULL
);
CREATE TABLE IF NOT EXISTS generations (
    generation_id TEXT PRIMARY KEY,
    session_id TEXT NOT NULL REFERENCES sessions(session_id),
    created_ns INTEGER NOT NULL,
    created_at TEXT NOT NULL,
    inputs_hash TEXT NOT NULL,
    caption TEXT NOT NULL,
    seed INTEGER NOT NULL,
    image_png BLOB NOT NULL,
    segmap_png BLOB NOT NULL,
    shape_map_png BLOB NOT NULL,
    out_image_png BLOB NOT NULL
);
CREATE INDEX IF NOT EXISTS idx_generations_session
    ON generations(session_id, created_ns, generation_id);
"""


class SessionStore:
    """Append-only sqlite store of sessions and their generations."""

    def __init__(self, path):
        self.path = str(path)
        self._lock = threading.Lock()
        self._conn = sqlite3.connect(self.path, check_same_thread=False)
        self._conn.row_factory = sqlite3.Row
        with self._lock, self._conn:
            self._conn.executescript(_SCHEMA)

    def close(self) -> None:
        with self._lock:
            self._conn.close()

    def create_session(self) -> str:
        session_id = uuid.uuid4().hex
        with self._lock, self._conn:
            self._conn.execute(
                "INSERT INTO sessions (session_id, created_ns) VALUES (?, ?)",
                (session_id, time.time_ns()))
        return session_id

    def session_exists(self, session_id) -> bool:
        with self._lock:
            row = self._conn.execute(
                "SELECT 1 FROM sessions WHERE session_id = ?",
                (session_id,)).fetchone()
        return row is not None

    def ensure_session(self, session_id) -> None:
        with self._lock, self._conn:
            self._conn.execute(
                "INSERT OR IGNORE INTO sessions (session_id, created_ns)"
                " VALUES (?, ?)", (session_id, time.time_ns()))

    def add_generation(self, session_id, caption, seed, image_png,
                       segmap_png, shape_map_png, out_image_png) -> str:
        generation_id = uuid.uuid4().hex
        digest = hashlib.sha256()
        digest.update(image_png)
        digest.update(segmap_png)
        digest.update(caption.encode("utf-8"))
        digest.update(str(seed).encode("ascii"))
        now = time.time_ns()
        stamp = datetime.now(timezone.utc).isoformat(timespec="microseconds")
        with self._lock, self._conn:
            self._conn.execute(
                "INSERT INTO generations (generation_id, session_id,"
                " created_ns, created_at, inputs_hash, caption, seed,"
                " image_png, segmap_png, shape_map_png, out_image_png)"
                " VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?)",
                (generation_id, session_id, now, stamp, digest.hexdigest(),
                 caption, int(seed), image_png, segmap_png, shape_map_png,
                 out_image_png))
        return generation_id

    def generation(self, generation_id):
        with self._lock:
            row = self._conn.execute(
                "SELECT * FROM generations WHERE generation_id = ?",
                (generation_id,)).fetchone()
        return dict(row) if row is not None else None

    def history(self, session_id) -> list:
        with self._lock:
            rows = self._conn.execute(
                "SELECT * FROM generations WHERE session_id = ?"
                " ORDER BY created_ns, generation_id",
                (session_id,)).fetchall()
        return [dict(row) for row in rows]


class GenerateRequest(BaseModel):
    image: str
    segmap: str
    caption: str = Field(min_length=1, max_length=200)
    seed: int | None = None
    session_id: str | None = None


class InterpolateRequest(BaseModel):
    generation_id_a: str
    generation_id_b: str
    mode: str
    steps: int = Field(ge=2, le=MAX_WALK_STEPS)


def _b64_png(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def _decode_b64(value: str, field: str) -> bytes:
    try:
        return base64.b64decode(value, validate=True)
    except Exception:
        raise FashionSynthError(f"{field}: not valid base64")


def create_app(checkpoint_dir, store_path) -> FastAPI:
    """Build the service app around one checkpoint pair and one store."""
    torch.set_num_threads(1)
    store = SessionStore(store_path)
    pipeline = None
    ckpt_dir = Path(checkpoint_dir)
    try:
        pipeline = Pipeline(ckpt_dir / "shape_final.zip",
                            ckpt_dir / "image_final.zip")
    except (MissingCheckpoint, StageMismatch, OSError):
        pipeline = None
    infer_lock = threading.Lock()

    app = FastAPI(title="fashion-synth service")
    app.state.store = store
    app.state.pipeline = pipeline

    @app.exception_handler(RequestValidationError)
    def _validation_error(request: Request, exc: RequestValidationError):
        parts = []
        for err in exc.errors():
            loc = ".".join(str(p) for p in err["loc"] if p != "body")
            parts.append(f"{loc or 'body'}: {err['msg']}")
        return JSONResponse(status_code=400,
                            content={"detail": "; ".join(parts)})

    @app.middleware("http")
    async def _limit_body(request: Request, call_next):
        if request.method == "POST":
            header = request.headers.get("content-length")
            if header is not None and header.isdigit() \
                    and int(header) > MAX_BODY_BYTES:
                return JSONResponse(status_code=413,
                                    content={"detail": "payload exceeds 8 MiB"})
            body = await request.body()
            if len(body) > MAX_BODY_BYTES:
                return JSONResponse(status_code=413,
                                    content={"detail": "payload exceeds 8 MiB"})
        return await call_next(request)

    def _require_pipeline():
        if app.state.pipeline is None:
            return JSONResponse(status_code=503,
                                content={"detail": "checkpoints not loaded"})
        return None

    @app.post("/api/session")
    def api_session():
        return {"session_id": store.create_session()}

    @app.post("/api/generate")
    def api_generate(req: GenerateRequest):
        unavailable = _require_pipeline()
        if unavailable is not None:
            return unavailable
        pipe = app.state.pipeline
        try:
            image_png = _decode_b64(req.image, "image")
            segmap_png = _decode_b64(req.segmap, "segmap")
            image = image_from_png_bytes(image_png)
            segmap = segmap_from_png_bytes(segmap_png)
            if image.width != pipe.resolution or image.height != pipe.resolution:
                raise FashionSynthError(
                    f"image: expected {pipe.resolution}x{pipe.resolution} pixels,"
                    f" got {image.width}x{image.height}")
            seed = req.seed if req.seed is not None \
                else secrets.randbelow(2 ** 31)
            with infer_lock:
                map_soft, final = pipe.run(image, segmap, req.caption,
                                           derive_stage_seeds(seed))
        except FashionSynthError as exc:
            return JSONResponse(status_code=400, content={"detail": str(exc)})
        except Exception:
            return JSONResponse(status_code=400,
                                content={"detail": "malformed payload"})
        map_hard = SegMap(one_hot_map(argmax_labels(map_soft)))
        shape_png = segmap_to_png_bytes(map_hard)
        out_png = image_to_png_bytes(final)
        if req.session_id is not None:
            store.ensure_session(req.session_id)
            session_id = req.session_id
        else:
            session_id = store.create_session()
        generation_id = store.add_generation(
            session_id, req.caption, seed, image_png, segmap_png,
            shape_png, out_png)
        return {"shape_map": _b64_png(shape_png), "image": _b64_png(out_png),
                "session_id": session_id, "generation_id": generation_id,
                "seed": seed}

    @app.post("/api/interpolate")
    def api_interpolate(req: InterpolateRequest):
        unavailable = _require_pipeline()
        if unavailable is not None:
            return unavailable
        if req.mode not in WALK_MODES:
            return JSONResponse(
                status_code=400,
                content={"detail": f"mode: must be one of {WALK_MODES}"})
        rows = {}
        for field in ("generation_id_a", "generation_id_b"):
            gid = getattr(req, field)
            row = store.generation(gid)
            if row is None:
                return JSONResponse(
                    status_code=404,
                    content={"detail": f"{field}: unknown generation {gid!r}"})
            rows[field] = row

        def endpoint(row):
            return WalkEndpoint(
                image=image_from_png_bytes(row["image_png"]),
                segmap=segmap_from_png_bytes(row["segmap_png"]),
                caption=row["caption"], seed=row["seed"])

        with infer_lock:
            frames = interpolation_walk(
                app.state.pipeline, endpoint(rows["generation_id_a"]),
                endpoint(rows["generation_id_b"]), req.mode, req.steps)
        return {"frames": [_b64_png(image_to_png_bytes(f)) for f in frames],
                "mode": req.mode, "steps": req.steps}

    @app.get("/api/history")
    def api_history(session_id: str):
        if not store.session_exists(session_id):
            return JSONResponse(
                status_code=404,
                content={"detail": f"unknown session {session_id!r}"})
        entries = []
        for row in store.history(session_id):
            entries.append({
                "generation_id": row["generation_id"],
                "caption": row["caption"],
                "seed": row["seed"],
                "created_at": row["created_at"],
                "thumbnail": _b64_png(row["out_image_png"]),
                "shape_map": _b64_png(row["shape_map_png"]),
            })
        return {"session_id": session_id, "generations": entries}

    @app.get("/api/health")
    def api_health():
        return {"status": "ok",
                "checkpoints_loaded": app.state.pipeline is not None}

    return app


def run_server(checkpoint_dir, store_path=None, host: str = "127.0.0.1",
               port: int = 8000) -> None:
    import uvicorn

    if store_path is None:
        from .cli import home_dir

        store_path = home_dir() / "sessions.db"
        Path(store_path).parent.mkdir(parents=True, exist_ok=True)
    app = create_app(checkpoint_dir, store_path)
    uvicorn.run(app, host=host, port=port)
