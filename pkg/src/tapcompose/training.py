"""Teacher-forced training: slicing, epochs, accuracy, and checkpoints.

Each epoch takes one random fixed-length slice from every eligible record
(records shorter than the slice length sit out), groups the slices into
batches, and applies mean-reduced cross-entropy gradients with Adam under
a global-norm clip.  Accuracy is argmax next-note accuracy over all
teacher-forced positions, the same number reported for train and
validation splits.

Checkpoints are a small binary container (magic "DBCK"): a JSON header
with the model config, epoch, normalization statistics, and optimizer
hyperparameters, followed by named little-endian tensors for every
parameter and its Adam moments.  Reloading restores forward outputs
bit-identically.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from tapcompose.data import START_TOKEN, CacheRecord, random_slice
from tapcompose.models import ModelConfig, SequenceModel, build_model
from tapcompose.nn import Adam, clip_global_norm, softmax_cross_entropy

__all__ = [
    "TrainConfig",
    "EpochMetrics",
    "Checkpoint",
    "CheckpointFormatError",
    "split_records",
    "fit_normalization",
    "train_epoch",
    "evaluate_accuracy",
    "format_metrics_line",
    "parse_metrics_line",
    "checkpoint_from",
    "save_checkpoint",
    "load_checkpoint",
    "load_checkpoint_meta",
    "restore_model",
    "fit",
]

CHECKPOINT_MAGIC = b"DBCK"
CHECKPOINT_VERSION = 1

_DTYPE_CODES = {0: "<f8", 1: "<f4", 2: "<i8", 3: "u1"}
_DTYPE_FOR = {np.dtype(np.float64): 0, np.dtype(np.float32): 1, np.dtype(np.int64): 2, np.dtype(np.uint8): 3}


class CheckpointFormatError(ValueError):
    """A checkpoint file does not follow the DBCK layout."""


@dataclass(frozen=True)
class TrainConfig:
    """Everything a training run needs besides the data itself."""

    model: ModelConfig = field(default_factory=ModelConfig)
    slice_length: int = 64
    batch_size: int = 16
    epochs: int = 10
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    validation_fraction: float = 0.1
    seed: int = 0
    grad_clip: float = 5.0

    def __post_init__(self):
        if self.slice_length < 2:
            raise ValueError(f"slice_length must be at least 2, got {self.slice_length}")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError(
                f"validation_fraction must lie in (0, 1), got {self.validation_fraction}"
            )
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("Adam betas must lie in [0, 1)")
        if self.grad_clip <= 0:
            raise ValueError("grad_clip must be positive")

    def to_dict(self) -> dict:
        data = {k: getattr(self, k) for k in self.__dataclass_fields__}
        data["model"] = self.model.to_dict()
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        data = dict(data)
        data["model"] = ModelConfig.from_dict(data["model"])
        return cls(**data)


@dataclass(frozen=True)
class EpochMetrics:
    epoch: int
    loss: float
    train_accuracy: float
    val_accuracy: float


# --------------------------------------------------------------- data prep


def split_records(
    records: Sequence[CacheRecord], validation_fraction: float, seed: int
) -> tuple[list[CacheRecord], list[CacheRecord]]:
    """Disjoint record-level split, stable for a given seed.

    Whole records (performances) go to one side or the other so nothing
    leaks between splits.  With a single record the validation side is
    empty rather than stealing the only training example.
    """
    if not 0.0 < validation_fraction < 1.0:
        raise ValueError(f"validation_fraction must lie in (0, 1), got {validation_fraction}")
    records = list(records)
    if not records:
        raise ValueError("no records to split")
    order = np.random.default_rng(seed).permutation(len(records))
    n_val = int(round(len(records) * validation_fraction))
    n_val = min(max(n_val, 1), len(records) - 1) if len(records) > 1 else 0
    val_idx = set(order[:n_val].tolist())
    train = [records[i] for i in range(len(records)) if i not in val_idx]
    val = [records[i] for i in range(len(records)) if i in val_idx]
    return train, val


def fit_normalization(records: Sequence[CacheRecord]) -> tuple[np.ndarray, np.ndarray]:
    """Per-column mean/std of (rest, duration) over every beat in ``records``."""
    if not records:
        raise ValueError("no records to fit normalization on")
    stacked = np.concatenate([np.asarray(r.beats, dtype=np.float64) for r in records])
    mean = stacked.mean(axis=0)
    std = np.maximum(stacked.std(axis=0), 1e-6)
    return mean, std


def _slice_to_sample(beats: np.ndarray, pitches: np.ndarray):
    labels = np.asarray(pitches, dtype=np.int64)
    y_prev = np.concatenate([[START_TOKEN], labels[:-1]])
    return np.asarray(beats, dtype=np.float64), y_prev, labels


# --------------------------------------------------------------- the loop


def train_epoch(
    model: SequenceModel,
    optimizer: Adam,
    records: Sequence[CacheRecord],
    config: TrainConfig,
    rng: np.random.Generator,
) -> tuple[float, float]:
    """One pass over all records long enough to slice; returns (loss, accuracy).

    Each record contributes one random slice; batches average gradients
    (mean reduction) and take one clipped Adam step.
    """
    eligible = [r for r in records if len(r) >= config.slice_length]
    if not eligible:
        raise ValueError(
            f"no records with at least slice_length={config.slice_length} steps"
        )
    order = rng.permutation(len(eligible))

    total_loss = 0.0
    correct = 0
    positions = 0
    for start in range(0, len(order), config.batch_size):
        batch = order[start : start + config.batch_size]
        optimizer.zero_grad()
        for idx in batch:
            record = eligible[idx]
            sliced = random_slice(record.beats, record.pitches, config.slice_length, rng)
            if sliced is None:
                continue
            beats, y_prev, labels = _slice_to_sample(*sliced)
            logits, cache = model.forward_teacher_forced(beats, y_prev)
            loss, d_logits = softmax_cross_entropy(logits, labels)
            model.backward_teacher_forced(d_logits / len(batch), cache)
            total_loss += loss
            correct += int(np.sum(np.argmax(logits, axis=1) == labels))
            positions += len(labels)
        clip_global_norm(model.params, config.grad_clip)
        optimizer.step()

    return total_loss / len(eligible), correct / positions


def evaluate_accuracy(
    model: SequenceModel,
    records: Sequence[CacheRecord],
    max_length: int | None = None,
) -> float:
    """Teacher-forced argmax accuracy over every position of every record.

    ``max_length`` truncates each record (a deterministic evaluation
    budget for long performances); None scores full sequences.
    """
    records = list(records)
    if not records:
        raise ValueError("no records to evaluate")
    correct = 0
    positions = 0
    for record in records:
        beats = np.asarray(record.beats, dtype=np.float64)
        pitches = record.pitches
        if max_length is not None:
            beats, pitches = beats[:max_length], pitches[:max_length]
        if len(pitches) == 0:
            continue
        beats, y_prev, labels = _slice_to_sample(beats, pitches)
        logits, _ = model.forward_teacher_forced(beats, y_prev)
        correct += int(np.sum(np.argmax(logits, axis=1) == labels))
        positions += len(labels)
    if positions == 0:
        raise ValueError("no positions to evaluate")
    return correct / positions


# --------------------------------------------------------------- metrics


def format_metrics_line(metrics: EpochMetrics) -> str:
    return (
        f"epoch={metrics.epoch}"
        f" loss={metrics.loss!r}"
        f" train_acc={metrics.train_accuracy!r}"
        f" val_acc={metrics.val_accuracy!r}"
    )


def parse_metrics_line(line: str) -> EpochMetrics:
    fields = dict(part.split("=", 1) for part in line.split())
    try:
        return EpochMetrics(
            epoch=int(fields["epoch"]),
            loss=float(fields["loss"]),
            train_accuracy=float(fields["train_acc"]),
            val_accuracy=float(fields["val_acc"]),
        )
    except KeyError as exc:
        raise ValueError(f"metrics line missing field {exc}") from None


# --------------------------------------------------------------- checkpoints


@dataclass
class Checkpoint:
    """Snapshot of a model plus optimizer, restorable bit-for-bit."""

    config: ModelConfig
    epoch: int
    norm_mean: np.ndarray
    norm_std: np.ndarray
    val_accuracy: float
    params: dict[str, np.ndarray]
    adam_m: dict[str, np.ndarray]
    adam_v: dict[str, np.ndarray]
    adam_t: int
    adam_hypers: dict


def checkpoint_from(
    model: SequenceModel, optimizer: Adam, epoch: int, val_accuracy: float
) -> Checkpoint:
    some_state = next(iter(optimizer.states.values()))
    return Checkpoint(
        config=model.config,
        epoch=epoch,
        norm_mean=model.norm_mean.copy(),
        norm_std=model.norm_std.copy(),
        val_accuracy=float(val_accuracy),
        params={n: p.value.copy() for n, p in model.params.items()},
        adam_m={n: s.m.copy() for n, s in optimizer.states.items()},
        adam_v={n: s.v.copy() for n, s in optimizer.states.items()},
        adam_t=optimizer.t,
        adam_hypers={
            "lr": some_state.lr,
            "beta1": some_state.beta1,
            "beta2": some_state.beta2,
            "eps": some_state.eps,
        },
    )


def _pack_tensor(name: str, array: np.ndarray) -> bytes:
    encoded = name.encode("utf-8")
    dtype = np.asarray(array).dtype
    if dtype not in _DTYPE_FOR:
        raise ValueError(f"unsupported tensor dtype {dtype} for {name!r}")
    code = _DTYPE_FOR[dtype]
    out = struct.pack("<I", len(encoded)) + encoded
    out += struct.pack("<B", np.asarray(array).ndim)
    for dim in np.asarray(array).shape:
        out += struct.pack("<I", dim)
    out += struct.pack("<B", code)
    out += np.ascontiguousarray(array).astype(_DTYPE_CODES[code]).tobytes()
    return out


def save_checkpoint(path: str | Path, ckpt: Checkpoint) -> None:
    meta = {
        "config": ckpt.config.to_dict(),
        "epoch": ckpt.epoch,
        "val_accuracy": ckpt.val_accuracy,
        "norm_mean": [float(x) for x in ckpt.norm_mean],
        "norm_std": [float(x) for x in ckpt.norm_std],
        "adam_t": ckpt.adam_t,
        "adam_hypers": ckpt.adam_hypers,
    }
    meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")
    out = bytearray()
    out += CHECKPOINT_MAGIC
    out += struct.pack("<I", CHECKPOINT_VERSION)
    out += struct.pack("<I", len(meta_bytes))
    out += meta_bytes
    tensors: list[tuple[str, np.ndarray]] = []
    for name, value in ckpt.params.items():
        tensors.append((f"p:{name}", value))
    for name, value in ckpt.adam_m.items():
        tensors.append((f"m:{name}", value))
    for name, value in ckpt.adam_v.items():
        tensors.append((f"v:{name}", value))
    out += struct.pack("<I", len(tensors))
    for name, value in tensors:
        out += _pack_tensor(name, value)
    Path(path).write_bytes(bytes(out))


def load_checkpoint_meta(path: str | Path) -> dict:
    """Read just the JSON header of a checkpoint (no tensor payloads)."""
    with open(path, "rb") as fh:
        head = fh.read(12)
        if len(head) < 12:
            raise CheckpointFormatError("truncated checkpoint: header incomplete")
        if head[:4] != CHECKPOINT_MAGIC:
            raise CheckpointFormatError("bad magic, not a DBCK checkpoint")
        (version,) = struct.unpack("<I", head[4:8])
        if version != CHECKPOINT_VERSION:
            raise CheckpointFormatError(
                f"unsupported version {version}, expected {CHECKPOINT_VERSION}"
            )
        (meta_len,) = struct.unpack("<I", head[8:12])
        raw = fh.read(meta_len)
        if len(raw) < meta_len:
            raise CheckpointFormatError("truncated checkpoint: header incomplete")
    try:
        return json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointFormatError(f"unreadable checkpoint header: {exc}") from exc


def load_checkpoint(path: str | Path) -> Checkpoint:
    data = Path(path).read_bytes()
    pos = 0

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(data):
            raise CheckpointFormatError(f"truncated checkpoint: wanted {n} bytes at offset {pos}")
        chunk = data[pos : pos + n]
        pos += n
        return chunk

    if take(4) != CHECKPOINT_MAGIC:
        raise CheckpointFormatError("bad magic, not a DBCK checkpoint")
    (version,) = struct.unpack("<I", take(4))
    if version != CHECKPOINT_VERSION:
        raise CheckpointFormatError(f"unsupported version {version}, expected {CHECKPOINT_VERSION}")
    (meta_len,) = struct.unpack("<I", take(4))
    try:
        meta = json.loads(take(meta_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointFormatError(f"unreadable checkpoint header: {exc}") from exc

    (n_tensors,) = struct.unpack("<I", take(4))
    tensors: dict[str, np.ndarray] = {}
    for _ in range(n_tensors):
        (name_len,) = struct.unpack("<I", take(4))
        name = take(name_len).decode("utf-8")
        (ndim,) = struct.unpack("<B", take(1))
        shape = tuple(struct.unpack("<I", take(4))[0] for _ in range(ndim))
        (code,) = struct.unpack("<B", take(1))
        if code not in _DTYPE_CODES:
            raise CheckpointFormatError(f"unknown dtype code {code} for tensor {name!r}")
        dtype = np.dtype(_DTYPE_CODES[code])
        n_bytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        tensors[name] = np.frombuffer(take(n_bytes), dtype=dtype).reshape(shape).copy()
    if pos != len(data):
        raise CheckpointFormatError(f"{len(data) - pos} trailing bytes after last tensor")

    def group(prefix: str) -> dict[str, np.ndarray]:
        return {
            name[len(prefix) :]: arr
            for name, arr in tensors.items()
            if name.startswith(prefix)
        }

    return Checkpoint(
        config=ModelConfig.from_dict(meta["config"]),
        epoch=int(meta["epoch"]),
        norm_mean=np.asarray(meta["norm_mean"], dtype=np.float64),
        norm_std=np.asarray(meta["norm_std"], dtype=np.float64),
        val_accuracy=float(meta["val_accuracy"]),
        params=group("p:"),
        adam_m=group("m:"),
        adam_v=group("v:"),
        adam_t=int(meta["adam_t"]),
        adam_hypers=dict(meta["adam_hypers"]),
    )


def restore_model(
    ckpt: Checkpoint, expected: ModelConfig | None = None
) -> tuple[SequenceModel, Adam]:
    """Rebuild the model and optimizer a checkpoint describes."""
    if expected is not None and expected.kind != ckpt.config.kind:
        raise CheckpointFormatError(
            f"checkpoint kind {ckpt.config.kind!r} does not match expected kind {expected.kind!r}"
        )
    model = build_model(ckpt.config)
    for name, param in model.params.items():
        if name not in ckpt.params:
            raise CheckpointFormatError(f"missing tensor {name!r} in checkpoint")
        stored = ckpt.params[name]
        if stored.shape != param.value.shape:
            raise CheckpointFormatError(
                f"tensor {name!r} has shape {stored.shape}, model wants {param.value.shape}"
            )
        param.value = stored.astype(np.float64)
    model.set_normalization(ckpt.norm_mean, ckpt.norm_std)

    optimizer = Adam(model.params, **ckpt.adam_hypers)
    for name, state in optimizer.states.items():
        if name not in ckpt.adam_m or name not in ckpt.adam_v:
            raise CheckpointFormatError(f"missing optimizer moments for {name!r}")
        state.m = ckpt.adam_m[name].astype(np.float64)
        state.v = ckpt.adam_v[name].astype(np.float64)
        state.t = ckpt.adam_t
    return model, optimizer


# --------------------------------------------------------------- orchestration


def fit(
    records: Sequence[CacheRecord],
    config: TrainConfig,
    checkpoint_dir: str | Path | None = None,
    log: Callable[[str], None] | None = None,
    resume_from: str | Path | None = None,
    eval_max_length: int | None = None,
) -> tuple[SequenceModel, Adam, list[EpochMetrics]]:
    """Train config.epochs epochs, checkpointing each and tracking the best.

    Per-epoch randomness is seeded by (config.seed, epoch) so a resumed
    run sees exactly the slices a fresh run would have seen at the same
    epoch.  When the validation split is empty (single-record datasets)
    the training records stand in for it.
    """
    train, val = split_records(records, config.validation_fraction, config.seed)
    eval_records = val if val else train

    if resume_from is not None:
        ckpt = load_checkpoint(resume_from)
        if ckpt.config != config.model:
            raise CheckpointFormatError(
                "checkpoint model config does not match the training config"
            )
        model, optimizer = restore_model(ckpt)
        start_epoch = ckpt.epoch + 1
        best_val = ckpt.val_accuracy
    else:
        model = build_model(config.model, np.random.default_rng(config.seed))
        mean, std = fit_normalization(train)
        model.set_normalization(mean, std)
        optimizer = Adam(
            model.params,
            lr=config.learning_rate,
            beta1=config.beta1,
            beta2=config.beta2,
            eps=config.eps,
        )
        start_epoch = 1
        best_val = -1.0

    history: list[EpochMetrics] = []
    checkpoint_dir = Path(checkpoint_dir) if checkpoint_dir is not None else None
    if checkpoint_dir is not None:
        checkpoint_dir.mkdir(parents=True, exist_ok=True)

    for epoch in range(start_epoch, config.epochs + 1):
        rng = np.random.default_rng([config.seed, epoch])
        loss, train_acc = train_epoch(model, optimizer, train, config, rng)
        val_acc = evaluate_accuracy(model, eval_records, max_length=eval_max_length)
        metrics = EpochMetrics(epoch, loss, train_acc, val_acc)
        history.append(metrics)
        if log is not None:
            log(format_metrics_line(metrics))
        if checkpoint_dir is not None:
            ckpt = checkpoint_from(model, optimizer, epoch, val_acc)
            save_checkpoint(checkpoint_dir / f"{config.model.kind}.epoch{epoch}.dbck", ckpt)
            if val_acc >= best_val:
                best_val = val_acc
                save_checkpoint(checkpoint_dir / f"{config.model.kind}.dbck", ckpt)
    return model, optimizer, history
