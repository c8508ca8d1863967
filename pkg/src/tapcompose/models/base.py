"""Shared machinery for the sequence models.

Every model exposes two faces over the same parameters:

* teacher-forced training — ``forward_teacher_forced(beats, y_prev)``
  returns per-step logits plus a cache, and ``backward_teacher_forced``
  pushes a logits gradient back into ``Parameter.grad`` accumulators;

* step-wise sampling — ``sm_init(beats)`` precomputes whatever is
  position-independent (encoder passes run here) and ``sm_step`` advances
  one position at a time, returning the softmax distribution the
  teacher-forced pass would produce given the same prefix.

Beat inputs arrive in raw seconds and are standardized inside the model
with dataset statistics stored on it, so callers never pre-scale.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from typing import Any

import numpy as np

from tapcompose.models.config import ModelConfig
from tapcompose.nn import Parameter, softmax

__all__ = ["SequenceModel", "dropout_forward", "dropout_backward"]


def dropout_forward(x: np.ndarray, rate: float, rng: np.random.Generator | None):
    """Inverted dropout; identity when rate is 0 or no rng is supplied."""
    if rate <= 0.0 or rng is None:
        return x, None
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * mask, mask


def dropout_backward(d_out: np.ndarray, mask: np.ndarray | None) -> np.ndarray:
    return d_out if mask is None else d_out * mask


class SequenceModel(ABC):
    """Base for the five beats-to-notes architectures."""

    def __init__(self, config: ModelConfig, rng: np.random.Generator | None = None):
        self.config = config
        self.params: dict[str, Parameter] = {}
        self.norm_mean = np.zeros(2)
        self.norm_std = np.ones(2)
        self._build(rng if rng is not None else np.random.default_rng(0))

    # -- construction -----------------------------------------------------

    @abstractmethod
    def _build(self, rng: np.random.Generator) -> None:
        """Create all Parameters."""

    def add_param(self, name: str, value: np.ndarray) -> Parameter:
        if name in self.params:
            raise ValueError(f"duplicate parameter name {name!r}")
        param = Parameter(value)
        self.params[name] = param
        return param

    # -- normalization ----------------------------------------------------

    def set_normalization(self, mean: np.ndarray, std: np.ndarray) -> None:
        mean = np.asarray(mean, dtype=np.float64)
        std = np.asarray(std, dtype=np.float64)
        if mean.shape != (2,) or std.shape != (2,):
            raise ValueError("normalization statistics must have shape (2,)")
        if np.any(std <= 0):
            raise ValueError("normalization std must be positive")
        self.norm_mean = mean
        self.norm_std = std

    def standardize(self, beats: np.ndarray) -> np.ndarray:
        beats = np.asarray(beats, dtype=np.float64)
        if beats.ndim != 2 or beats.shape[1] != 2:
            raise ValueError(f"beats must have shape (T, 2), got {beats.shape}")
        return (beats - self.norm_mean) / self.norm_std

    # -- validation helpers -------------------------------------------------

    def check_teacher_inputs(self, beats: np.ndarray, y_prev: np.ndarray) -> np.ndarray:
        y_prev = np.asarray(y_prev, dtype=np.int64)
        if len(beats) != len(y_prev):
            raise ValueError(
                f"beats length {len(beats)} != y_prev length {len(y_prev)}"
            )
        if len(y_prev) == 0:
            raise ValueError("need at least one timestep")
        if y_prev[0] != 0:
            raise ValueError(f"y_prev must begin with the start token 0, got {y_prev[0]}")
        if y_prev.min() < 0 or y_prev.max() >= self.config.vocab:
            raise ValueError(f"y_prev values must lie in [0, {self.config.vocab})")
        return y_prev

    def check_position(self, position: int, total: int) -> None:
        if position >= total:
            raise ValueError(
                f"state machine stepped past the last beat (position {position} of {total})"
            )

    # -- model interface ----------------------------------------------------

    @abstractmethod
    def forward_teacher_forced(
        self,
        beats: np.ndarray,
        y_prev: np.ndarray,
        dropout_rng: np.random.Generator | None = None,
    ) -> tuple[np.ndarray, Any]:
        """Return (logits of shape (T, vocab), cache for backward)."""

    @abstractmethod
    def backward_teacher_forced(self, d_logits: np.ndarray, cache: Any) -> None:
        """Accumulate parameter gradients for a teacher-forced forward."""

    @abstractmethod
    def sm_init(self, beats: np.ndarray) -> tuple[Any, Any]:
        """Return (constants, initial state) for step-wise sampling."""

    @abstractmethod
    def sm_step(self, constants: Any, state: Any, prev_note: int) -> tuple[Any, np.ndarray]:
        """Advance one position; return (next state, next-note distribution)."""

    # -- shared pieces ------------------------------------------------------

    def embed_notes(self, table: np.ndarray, notes: np.ndarray) -> np.ndarray:
        return table[notes]

    def embed_backward(self, grad_table: np.ndarray, notes: np.ndarray, d_rows: np.ndarray):
        np.add.at(grad_table, notes, d_rows)

    def distribution_from_logits(self, logits_row: np.ndarray) -> np.ndarray:
        return softmax(logits_row)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def parameter_count(self) -> int:
        return sum(p.value.size for p in self.params.values())
