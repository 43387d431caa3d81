"""HTTP JSON API over a checkpoint registry.

Wire format matches the sketch file schema: a sketch is {"points":
[[x, y, pen], ...]}. Seeds are optional; when absent the server draws one
and echoes it back so any response can be reproduced. Error mapping:
404 unknown model, 400 schema violation or checkpoint-mode mismatch,
422 degenerate (zero-arc-length) sketch, 503 while a model is loading.
"""

from __future__ import annotations

import os
import threading
from typing import Optional

import numpy as np
import torch
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from . import applications as apps
from .data import PointSet, ThreePointSketch, to_velocities
from .errors import ModeError, SketchDiffError
from .training import Checkpoint, load_checkpoint

MAX_STEPS = 1000


class SketchPayload(BaseModel):
    points: list[list[float]] = Field(min_length=2)


class SampleRequest(BaseModel):
    length: Optional[int] = None
    sampler: str = "ddim"
    steps: int = 50
    seed: Optional[int] = None
    k: Optional[float] = None


class HealRequest(BaseModel):
    sketch: SketchPayload
    th_frac: float = Field(ge=0.0, le=1.0)
    seed: Optional[int] = None


class ImplicitRequest(BaseModel):
    sketch: SketchPayload
    tc_frac: float = Field(ge=0.0, le=1.0)
    seed: Optional[int] = None
    n: int = Field(default=1, ge=1, le=16)


class MixRequest(BaseModel):
    base: SketchPayload
    reference: Optional[SketchPayload] = None
    delta: Optional[float] = None
    mode: str = "latent-ddim"
    omega: int = 7
    seed: Optional[int] = None


class VectorizeRequest(BaseModel):
    points: list[list[float]] = Field(min_length=2)
    n: int = Field(default=1, ge=1, le=16)
    length: Optional[int] = None
    seed: Optional[int] = None


class ReconstructRequest(BaseModel):
    sketch: SketchPayload
    length_factor: float = Field(default=1.0, ge=1.0)
    steps: int = 50


class LoadRequest(BaseModel):
    path: str


class ApiError(Exception):
    def __init__(self, status: int, detail: str):
        self.status = status
        self.detail = detail


class ModelRegistry:
    """Immutable loaded checkpoints behind string ids; load/unload are the
    only mutations and are serialized by a lock."""

    def __init__(self):
        self._lock = threading.Lock()
        self._entries: dict[str, dict] = {}

    def load(self, model_id: str, path: str) -> None:
        with self._lock:
            self._entries[model_id] = {"status": "loading", "ckpt": None}
        try:
            ckpt = load_checkpoint(path)
        except SketchDiffError:
            with self._lock:
                self._entries.pop(model_id, None)
            raise
        with self._lock:
            self._entries[model_id] = {"status": "ready", "ckpt": ckpt}

    def unload(self, model_id: str) -> bool:
        with self._lock:
            return self._entries.pop(model_id, None) is not None

    def mark_loading(self, model_id: str) -> None:
        with self._lock:
            self._entries[model_id] = {"status": "loading", "ckpt": None}

    def get(self, model_id: str) -> Checkpoint:
        with self._lock:
            entry = self._entries.get(model_id)
        if entry is None:
            raise ApiError(404, f"unknown model {model_id!r}")
        if entry["status"] != "ready":
            raise ApiError(503, f"model {model_id!r} is loading")
        return entry["ckpt"]

    def list(self) -> list[dict]:
        with self._lock:
            entries = dict(self._entries)
        out = []
        for model_id, entry in sorted(entries.items()):
            if entry["status"] != "ready":
                out.append({"id": model_id, "status": "loading"})
                continue
            ckpt = entry["ckpt"]
            out.append(
                {
                    "id": model_id,
                    "mode": ckpt.mode,
                    "T": ckpt.schedule_config["T"],
                    "latent_dim": ckpt.estimator_config.latent_dim,
                    "status": "ready",
                }
            )
        return out


def _decode_sketch(payload: SketchPayload) -> ThreePointSketch:
    arr = np.asarray(payload.points, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ApiError(400, "points must be [x, y, pen] triples")
    if not np.all(np.isin(arr[:, 2], (-1.0, 1.0))):
        raise ApiError(400, "pen values must be -1 or 1")
    if float(np.linalg.norm(np.diff(arr[:, :2], axis=0), axis=1).sum()) <= 0.0:
        raise ApiError(422, "degenerate sketch: zero arc length")
    return ThreePointSketch(arr)


def _encode_sketch(sk: ThreePointSketch) -> dict:
    return {"points": [[float(x), float(y), int(p)] for x, y, p in sk.points]}


def _resolve_seed(seed: Optional[int]) -> int:
    if seed is not None:
        return int(seed)
    return int.from_bytes(os.urandom(4), "big")


def build_app(models: Optional[dict[str, str]] = None) -> FastAPI:
    app = FastAPI(title="sketchdiff service")
    registry = ModelRegistry()
    app.state.registry = registry
    for model_id, path in (models or {}).items():
        registry.load(model_id, path)

    @app.exception_handler(ApiError)
    async def api_error_handler(request: Request, exc: ApiError):
        return JSONResponse(status_code=exc.status, content={"detail": exc.detail})

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": exc.errors()})

    @app.exception_handler(SketchDiffError)
    async def domain_error_handler(request: Request, exc: SketchDiffError):
        status = 400 if isinstance(exc, ModeError) else 422
        return JSONResponse(status_code=status, content={"detail": str(exc)})

    @app.get("/models")
    def list_models():
        return {"models": registry.list()}

    @app.post("/models/{model_id}/load")
    def load_model(model_id: str, req: LoadRequest):
        registry.load(model_id, req.path)
        return {"id": model_id, "status": "ready"}

    @app.delete("/models/{model_id}")
    def unload_model(model_id: str):
        if not registry.unload(model_id):
            raise ApiError(404, f"unknown model {model_id!r}")
        return {"id": model_id, "status": "unloaded"}

    @app.post("/models/{model_id}/sample")
    def sample_endpoint(model_id: str, req: SampleRequest):
        ckpt = registry.get(model_id)
        if ckpt.mode != "none":
            raise ApiError(400, "unconditional sampling needs an unconditional checkpoint")
        _, _, schedule = apps.materialize(ckpt)
        if req.k is not None and not 0.0 <= req.k <= 1.0:
            raise ApiError(400, "k must be in [0, 1]")
        length = req.length
        if length is None:
            length = int((ckpt.dataset_meta.get("preprocess") or {}).get("target_len") or 32)
        if req.sampler not in ("ddpm", "ddim"):
            raise ApiError(400, f"unknown sampler {req.sampler!r}")
        steps = schedule.T if req.sampler == "ddpm" else min(req.steps, schedule.T)
        if steps > MAX_STEPS:
            raise ApiError(400, f"step budget exceeded ({steps} > {MAX_STEPS})")
        seed = _resolve_seed(req.seed)
        rng = torch.Generator().manual_seed(seed)
        if req.k is not None:
            # abstraction: posterior-mean-form ancestral chain, variance x k
            if req.sampler != "ddpm":
                raise ApiError(400, "k applies to the ancestral (ddpm) sampler")
            sk = apps.abstract_sample(ckpt, req.k, length, rng)
        else:
            sk = apps.unconditional_sample(ckpt, length, req.sampler, steps, rng=rng)
        return {
            "sketch": _encode_sketch(sk),
            "topology": list(range(len(sk))),
            "seed": seed,
        }

    @app.post("/models/{model_id}/heal")
    def heal_endpoint(model_id: str, req: HealRequest):
        ckpt = registry.get(model_id)
        sk = _decode_sketch(req.sketch)
        schedule = ckpt.schedule()
        t_h = int(round(req.th_frac * schedule.T))
        seed = _resolve_seed(req.seed)
        healed = apps.heal(ckpt, sk, t_h, torch.Generator().manual_seed(seed))
        return {"sketch": _encode_sketch(healed), "seed": seed}

    @app.post("/models/{model_id}/implicit")
    def implicit_endpoint(model_id: str, req: ImplicitRequest):
        ckpt = registry.get(model_id)
        sk = _decode_sketch(req.sketch)
        schedule = ckpt.schedule()
        t_c = int(round(req.tc_frac * schedule.T))
        seed = _resolve_seed(req.seed)
        rng = torch.Generator().manual_seed(seed)
        outs = [
            apps.implicit_condition(ckpt, apps.ConditionSpec(step=t_c, condition=sk), rng)
            for _ in range(req.n)
        ]
        return {"sketches": [_encode_sketch(o) for o in outs], "seed": seed}

    @app.post("/models/{model_id}/mix")
    def mix_endpoint(model_id: str, req: MixRequest):
        ckpt = registry.get(model_id)
        base = _decode_sketch(req.base)
        if req.reference is None:
            raise ApiError(400, "mix requires a reference sketch")
        reference = _decode_sketch(req.reference)
        seed = _resolve_seed(req.seed)
        if req.mode == "latent-ddim":
            delta = 0.5 if req.delta is None else req.delta
            if not 0.0 <= delta <= 1.0:
                raise ApiError(400, "delta must be in [0, 1]")
            mixed = apps.interpolate_latent(
                ckpt,
                to_velocities(base),
                to_velocities(reference),
                delta,
                steps=min(50, ckpt.schedule_config["T"]),
            )
        elif req.mode == "ilvr":
            mixed = apps.ilvr_mix(
                ckpt, base, reference, omega=req.omega, rng=torch.Generator().manual_seed(seed)
            )
        else:
            raise ApiError(400, f"unknown mix mode {req.mode!r}")
        return {"sketch": _encode_sketch(mixed), "seed": seed}

    @app.post("/models/{model_id}/vectorize")
    def vectorize_endpoint(model_id: str, req: VectorizeRequest):
        ckpt = registry.get(model_id)
        arr = np.asarray(req.points, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise ApiError(400, "points must be [x, y] pairs")
        seed = _resolve_seed(req.seed)
        rng = torch.Generator().manual_seed(seed)
        outs = apps.vectorize(ckpt, PointSet(arr), rng, n_samples=req.n, L=req.length)
        return {"sketches": [_encode_sketch(o) for o in outs], "seed": seed}

    @app.post("/models/{model_id}/reconstruct")
    def reconstruct_endpoint(model_id: str, req: ReconstructRequest):
        ckpt = registry.get(model_id)
        sk = _decode_sketch(req.sketch)
        v = to_velocities(sk)
        L = int(round(req.length_factor * len(v)))
        # deterministic decode from the all-zeros prior point, so that
        # latent-ddim mixing at delta = 0 reproduces this output exactly
        rec = apps.reconstruct(
            ckpt,
            v,
            length_factor=req.length_factor,
            steps=min(req.steps, ckpt.schedule_config["T"]),
            v_init=torch.zeros(L, 3),
        )
        return {"sketch": _encode_sketch(rec)}

    return app
