"""FastAPI app serving the trained models to the tap UI and the CLI.

Checkpoints live as .dbck files in one directory; clients address them by
file stem.  At most four models stay resident (least recently used wins),
guarded by a lock so concurrent requests share loaded parameters safely —
generation itself never mutates a model.
"""

from __future__ import annotations

import base64
import logging
import threading
from collections import OrderedDict
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Request
from fastapi.encoders import jsonable_encoder
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from tapcompose.config import AppConfig
from tapcompose.data import decode_to_notes, validate_beats
from tapcompose.midi import write_midi
from tapcompose.models import SequenceModel
from tapcompose.sampler import SamplerConfig, hybrid_beam_search, stochastic_search
from tapcompose.service.schemas import (
    GenerateRequest,
    GenerateResponse,
    HealthResponse,
    ModelInfo,
    SamplerParams,
)
from tapcompose.training import (
    CheckpointFormatError,
    load_checkpoint,
    load_checkpoint_meta,
    restore_model,
)

__all__ = ["ModelRegistry", "create_app", "pick_search", "to_sampler_config"]

logger = logging.getLogger(__name__)

MAX_RESIDENT_MODELS = 4


class ModelRegistry:
    """Lazily loads checkpoints by name, keeping an LRU of resident models."""

    def __init__(self, checkpoint_dir: str | Path, capacity: int = MAX_RESIDENT_MODELS):
        self.checkpoint_dir = Path(checkpoint_dir)
        self.capacity = capacity
        self._lock = threading.Lock()
        self._resident: OrderedDict[str, tuple[SequenceModel, dict]] = OrderedDict()

    def _path_for(self, name: str) -> Path:
        return self.checkpoint_dir / f"{name}.dbck"

    def list_models(self) -> list[ModelInfo]:
        infos = []
        for path in sorted(self.checkpoint_dir.glob("*.dbck")):
            try:
                meta = load_checkpoint_meta(path)
            except (CheckpointFormatError, OSError) as exc:
                logger.warning("skipping unreadable checkpoint %s: %s", path.name, exc)
                continue
            infos.append(
                ModelInfo(
                    name=path.stem,
                    kind=meta["config"]["kind"],
                    val_accuracy=float(meta["val_accuracy"]),
                )
            )
        return infos

    def get(self, name: str) -> tuple[SequenceModel, dict]:
        with self._lock:
            if name in self._resident:
                self._resident.move_to_end(name)
                return self._resident[name]
            path = self._path_for(name)
            if not path.is_file():
                raise KeyError(name)
            ckpt = load_checkpoint(path)
            model, _ = restore_model(ckpt)
            meta = {"kind": ckpt.config.kind, "val_accuracy": ckpt.val_accuracy}
            self._resident[name] = (model, meta)
            while len(self._resident) > self.capacity:
                self._resident.popitem(last=False)
            return self._resident[name]

    @property
    def resident_names(self) -> list[str]:
        with self._lock:
            return list(self._resident)


def to_sampler_config(params: SamplerParams) -> SamplerConfig:
    return SamplerConfig(
        temperature=params.temperature,
        top_k=params.top_k,
        top_p=params.top_p,
        repeat_decay=params.repeat_decay,
        beam_width=params.beam_width,
        beam_prob=params.beam_prob,
        hints=tuple(params.hints),
        seed=params.seed,
    )


def pick_search(config: SamplerConfig):
    """Beam machinery only engages when its knobs are turned."""
    if config.beam_width > 1 or config.beam_prob > 0:
        return hybrid_beam_search
    return stochastic_search


def create_app(config: AppConfig | None = None) -> FastAPI:
    config = config if config is not None else AppConfig.from_env()
    app = FastAPI(title="tapcompose", version="0.1.0", docs_url="/api/docs")
    registry = ModelRegistry(config.checkpoint_dir)
    app.state.config = config
    app.state.registry = registry

    if config.cors_origins:
        app.add_middleware(
            CORSMiddleware,
            allow_origins=list(config.cors_origins),
            allow_methods=["*"],
            allow_headers=["*"],
        )

    @app.exception_handler(RequestValidationError)
    async def malformed_body(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": jsonable_encoder(exc.errors())})

    @app.exception_handler(Exception)
    async def internal_error(request: Request, exc: Exception):
        # never leak stack traces or file paths to clients
        return JSONResponse(status_code=500, content={"detail": "internal server error"})

    @app.get("/api/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse()

    @app.get("/api/models", response_model=list[ModelInfo])
    def list_models() -> list[ModelInfo]:
        return registry.list_models()

    @app.post("/api/generate", response_model=GenerateResponse)
    def generate(request: GenerateRequest) -> GenerateResponse:
        try:
            model, _ = registry.get(request.model)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown model {request.model!r}")

        # round to f32 over the wire so served beats match cache precision
        beats = np.asarray(request.beats, dtype=np.float32).astype(np.float64)
        try:
            validate_beats(beats)
            sampler_config = to_sampler_config(request.sampler)
            search = pick_search(sampler_config)
            pitches, log_likelihood = search(model, beats, sampler_config)
            notes = decode_to_notes(beats, pitches)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))

        if not np.isfinite(log_likelihood):
            log_likelihood = float(np.finfo(np.float64).min)
        return GenerateResponse(
            pitches=[int(p) for p in pitches],
            midi_base64=base64.b64encode(write_midi(notes)).decode("ascii"),
            log_likelihood=float(log_likelihood),
        )

    return app
