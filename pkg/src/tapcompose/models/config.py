"""Model hyperparameter container shared by construction and checkpoints."""

from __future__ import annotations

from dataclasses import asdict, dataclass

VOCAB_SIZE = 128

MODEL_KINDS = (
    "baseline_rnn",
    "lstm_full_attn",
    "lstm_local_attn",
    "transformer",
    "transformer_rel",
)

TRANSFORMER_KINDS = ("transformer", "transformer_rel")


@dataclass(frozen=True)
class ModelConfig:
    """Hyperparameters for any of the five model kinds.

    ``num_layers`` is the recurrent stack depth for baseline_rnn and the
    encoder/decoder stack depth for the transformer kinds; the two LSTM
    kinds have fixed single-cell decoders and ignore it.  ``num_heads``
    and ``max_rel_distance`` only matter for the transformer kinds.
    """

    kind: str = "lstm_local_attn"
    embed_dim: int = 32
    hidden_dim: int = 64
    num_layers: int = 2
    num_heads: int = 4
    dropout_rate: float = 0.0
    max_rel_distance: int = 64
    vocab: int = VOCAB_SIZE

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}; expected one of {MODEL_KINDS}")
        if self.embed_dim <= 0 or self.hidden_dim <= 0:
            raise ValueError("embed_dim and hidden_dim must be positive")
        if self.num_layers < 1:
            raise ValueError("num_layers must be at least 1")
        if not 0 <= self.dropout_rate < 1:
            raise ValueError(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")
        if self.vocab != VOCAB_SIZE:
            raise ValueError(f"vocab is fixed at {VOCAB_SIZE}")
        if self.kind in TRANSFORMER_KINDS:
            if self.num_heads < 1 or self.embed_dim % self.num_heads != 0:
                raise ValueError(
                    f"num_heads ({self.num_heads}) must divide embed_dim ({self.embed_dim})"
                )
            if self.embed_dim % 2 != 0:
                raise ValueError("embed_dim must be even for sinusoidal position encodings")
            if self.max_rel_distance < 1:
                raise ValueError("max_rel_distance must be at least 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        return cls(**data)
