"""HTTP layer: FastAPI app factory, model registry, and API schemas."""

from tapcompose.service.app import ModelRegistry, create_app, pick_search, to_sampler_config
from tapcompose.service.schemas import (
    GenerateRequest,
    GenerateResponse,
    HealthResponse,
    ModelInfo,
    SamplerParams,
)

__all__ = [
    "ModelRegistry",
    "create_app",
    "pick_search",
    "to_sampler_config",
    "GenerateRequest",
    "GenerateResponse",
    "HealthResponse",
    "ModelInfo",
    "SamplerParams",
]
