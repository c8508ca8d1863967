"""Trainable note-sequence models sharing one interface.

Every model maps a beat sequence plus the previous-note sequence to
per-step pitch logits (teacher forcing), accumulates exact gradients on
its parameters, and exposes the step-wise (constants, state) form the
samplers consume.  `build_model` picks the class from config.kind.
"""

from __future__ import annotations

import numpy as np

from tapcompose.models.base import SequenceModel, dropout_backward, dropout_forward
from tapcompose.models.baseline import BaselineRnn
from tapcompose.models.config import MODEL_KINDS, TRANSFORMER_KINDS, VOCAB_SIZE, ModelConfig
from tapcompose.models.lstm_attn import LstmFullAttention, LstmLocalAttention
from tapcompose.models.transformer import Transformer, sinusoidal_positions

__all__ = [
    "MODEL_KINDS",
    "TRANSFORMER_KINDS",
    "VOCAB_SIZE",
    "ModelConfig",
    "SequenceModel",
    "BaselineRnn",
    "LstmFullAttention",
    "LstmLocalAttention",
    "Transformer",
    "build_model",
    "dropout_forward",
    "dropout_backward",
    "sinusoidal_positions",
]

_REGISTRY: dict[str, type[SequenceModel]] = {
    "baseline_rnn": BaselineRnn,
    "lstm_full_attn": LstmFullAttention,
    "lstm_local_attn": LstmLocalAttention,
    "transformer": Transformer,
    "transformer_rel": Transformer,
}


def build_model(config: ModelConfig, rng: np.random.Generator | None = None) -> SequenceModel:
    """Construct the model class registered for config.kind."""
    try:
        cls = _REGISTRY[config.kind]
    except KeyError:
        raise ValueError(f"unknown model kind {config.kind!r}") from None
    return cls(config, rng)
