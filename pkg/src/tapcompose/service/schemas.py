"""Request/response bodies for the HTTP API."""

from __future__ import annotations

from pydantic import BaseModel, Field

from tapcompose.sampler import N_PITCH_SLOTS


class HealthResponse(BaseModel):
    status: str = "ok"


class ModelInfo(BaseModel):
    name: str
    kind: str
    val_accuracy: float


class SamplerParams(BaseModel):
    """Mirror of SamplerConfig with the same ranges, JSON-shaped."""

    temperature: float = Field(default=1.0, gt=0)
    top_k: int = Field(default=N_PITCH_SLOTS, ge=1, le=N_PITCH_SLOTS)
    top_p: float = Field(default=1.0, gt=0, le=1)
    repeat_decay: float = Field(default=0.0, ge=0, lt=1)
    beam_width: int = Field(default=1, ge=1)
    beam_prob: float = Field(default=0.0, ge=0, le=1)
    hints: list[int] = Field(default_factory=list)
    seed: int = Field(default=0, ge=0, lt=2**64)


class GenerateRequest(BaseModel):
    model: str
    beats: list[tuple[float, float]] = Field(min_length=1)
    sampler: SamplerParams = Field(default_factory=SamplerParams)


class GenerateResponse(BaseModel):
    pitches: list[int]
    midi_base64: str
    log_likelihood: float
