"""Application configuration with environment-variable overrides.

Every field of AppConfig can be overridden by an environment variable
named TAPCOMPOSE_<FIELD> (upper-cased); the default sampler's fields map
to TAPCOMPOSE_SAMPLER_<FIELD>.  Comma-separated lists feed the
cors_origins tuple.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Mapping

from tapcompose.sampler import SamplerConfig

__all__ = ["AppConfig", "ENV_PREFIX"]

ENV_PREFIX = "TAPCOMPOSE_"


def _default_cache_dir() -> Path:
    return Path.home() / ".cache" / "tapcompose"


@dataclass(frozen=True)
class AppConfig:
    """Paths, network settings, and sampling defaults for the CLI and server."""

    dataset_url: str = ""
    dataset_sha256: str = ""
    cache_dir: Path = field(default_factory=_default_cache_dir)
    checkpoint_dir: Path = field(default_factory=lambda: Path("checkpoints"))
    host: str = "127.0.0.1"
    port: int = 8000
    cors_origins: tuple[str, ...] = ("http://localhost:5173", "http://127.0.0.1:5173")
    sampler: SamplerConfig = field(default_factory=SamplerConfig)

    def __post_init__(self):
        object.__setattr__(self, "cache_dir", Path(self.cache_dir).expanduser())
        object.__setattr__(self, "checkpoint_dir", Path(self.checkpoint_dir).expanduser())
        object.__setattr__(self, "cors_origins", tuple(self.cors_origins))
        if not 1 <= self.port <= 65535:
            raise ValueError(f"port must lie in [1, 65535], got {self.port}")

    @classmethod
    def from_env(cls, env: Mapping[str, str] | None = None, **overrides) -> "AppConfig":
        """Build a config from defaults, the environment, then explicit overrides."""
        env = os.environ if env is None else env
        values: dict = {}

        simple = {
            "dataset_url": str,
            "dataset_sha256": str,
            "cache_dir": Path,
            "checkpoint_dir": Path,
            "host": str,
            "port": int,
        }
        for name, convert in simple.items():
            raw = env.get(ENV_PREFIX + name.upper())
            if raw is not None:
                try:
                    values[name] = convert(raw)
                except ValueError:
                    raise ValueError(
                        f"{ENV_PREFIX + name.upper()} has invalid value {raw!r}"
                    ) from None
        raw = env.get(ENV_PREFIX + "CORS_ORIGINS")
        if raw is not None:
            values["cors_origins"] = tuple(
                origin.strip() for origin in raw.split(",") if origin.strip()
            )

        sampler_values: dict = {}
        for f in fields(SamplerConfig):
            if f.name == "hints":
                continue  # positional hints make no sense as a global default
            raw = env.get(f"{ENV_PREFIX}SAMPLER_{f.name.upper()}")
            if raw is None:
                continue
            convert = int if f.name in ("top_k", "beam_width", "seed") else float
            try:
                sampler_values[f.name] = convert(raw)
            except ValueError:
                raise ValueError(
                    f"{ENV_PREFIX}SAMPLER_{f.name.upper()} has invalid value {raw!r}"
                ) from None
        if sampler_values:
            values["sampler"] = SamplerConfig(**sampler_values)

        values.update(overrides)
        return cls(**values)
