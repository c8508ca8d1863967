"""Note sampling: distribution-shaping heuristics and two search procedures.

Models expose a functional state-machine interface (``sm_init`` /
``sm_step``) that yields one probability distribution over the 128 pitch
slots per timestep.  This module shapes those distributions (repeat decay,
temperature, top-k, top-p — applied in that fixed order, then renormalized)
and walks the machine either by sampling each step (``stochastic_search``)
or with a beam search whose steps randomly switch between deterministic
expansion and per-beam sampling (``hybrid_beam_search``).

Determinism contract: a search owns a single seeded ``numpy`` Generator.
Per timestep it consumes, in order: the mode draw (hybrid search only),
then one note draw per beam in beam-index order.  Hinted positions are
forced and consume no randomness.  All tie-breaks (top-k and top-p
selection, beam pruning, final beam choice) prefer the lower pitch index,
then the lower beam index, so equal seeds replay exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Protocol

import numpy as np

from tapcompose.data import START_TOKEN

__all__ = [
    "SamplerConfig",
    "Beam",
    "SequenceStateMachine",
    "apply_temperature",
    "apply_repeat_decay",
    "apply_top_k",
    "apply_top_p",
    "adjust_distribution",
    "mask_start_token",
    "stochastic_search",
    "hybrid_beam_search",
]

N_PITCH_SLOTS = 128


class SequenceStateMachine(Protocol):
    """What a model must provide for the searches to drive it."""

    def sm_init(self, beats: np.ndarray) -> tuple[Any, Any]:
        """Precompute per-sequence constants and the initial decoder state."""

    def sm_step(self, constants: Any, state: Any, prev_note: int) -> tuple[Any, np.ndarray]:
        """Advance one step; returns (next state, distribution over pitches).

        ``prev_note`` is the note emitted at the previous position, or the
        start token 0 at the first step.  States are treated as immutable
        so several beams may share a parent state.
        """


@dataclass(frozen=True)
class SamplerConfig:
    """Knobs for both searches; the defaults leave distributions untouched."""

    temperature: float = 1.0
    top_k: int = N_PITCH_SLOTS
    top_p: float = 1.0
    repeat_decay: float = 0.0
    beam_width: int = 1
    beam_prob: float = 0.0
    hints: tuple[int, ...] = ()
    seed: int = 0

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")
        if not 1 <= self.top_k <= N_PITCH_SLOTS:
            raise ValueError(f"top_k must lie in [1, {N_PITCH_SLOTS}], got {self.top_k}")
        if not 0 < self.top_p <= 1:
            raise ValueError(f"top_p must lie in (0, 1], got {self.top_p}")
        if not 0 <= self.repeat_decay < 1:
            raise ValueError(f"repeat_decay must lie in [0, 1), got {self.repeat_decay}")
        if self.beam_width < 1:
            raise ValueError(f"beam_width must be at least 1, got {self.beam_width}")
        if not 0 <= self.beam_prob <= 1:
            raise ValueError(f"beam_prob must lie in [0, 1], got {self.beam_prob}")
        object.__setattr__(self, "hints", tuple(int(h) for h in self.hints))
        for h in self.hints:
            if not 1 <= h <= 127:
                raise ValueError(f"hint pitches must lie in [1, 127], got {h}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed}")


@dataclass(frozen=True)
class Beam:
    """One hypothesis: decoder state, emitted notes, summed adjusted log-prob."""

    state: Any
    notes: tuple[int, ...]
    cum_log_likelihood: float


def _renormalized(dist: np.ndarray) -> np.ndarray:
    total = float(dist.sum())
    if not total > 0:
        raise ValueError("distribution has no probability mass left")
    return dist / total


def _log(x: float) -> float:
    with np.errstate(divide="ignore"):
        return float(np.log(x))


def apply_temperature(dist: np.ndarray, temperature: float) -> np.ndarray:
    """Sharpen (T < 1) or flatten (T > 1) by raising to the 1/T power.

    Computed in log space so zero entries stay exactly zero and large
    exponents cannot overflow.  The ranking of entries is unchanged for
    every positive T.
    """
    if not temperature > 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    dist = np.asarray(dist, dtype=np.float64)
    if temperature == 1.0:
        return _renormalized(dist.copy())
    with np.errstate(divide="ignore"):
        logs = np.log(dist) / temperature
    logs -= logs.max()
    return _renormalized(np.exp(logs))


def apply_repeat_decay(
    dist: np.ndarray,
    prev_note: int | None,
    decay: float,
    renormalize: bool = True,
) -> np.ndarray:
    """Scale the previous note's mass by (1 - decay); None means first step.

    ``renormalize=False`` exposes the raw damped vector, where chaining k
    steps multiplies a held note's mass by exactly (1 - decay)^(k-1).
    """
    dist = np.asarray(dist, dtype=np.float64).copy()
    if prev_note is not None and decay:
        dist[int(prev_note)] *= 1.0 - decay
    return _renormalized(dist) if renormalize else dist


def apply_top_k(dist: np.ndarray, k: int) -> np.ndarray:
    """Zero everything outside the k largest entries, keeping lower pitch on ties."""
    dist = np.asarray(dist, dtype=np.float64)
    if not 1 <= k <= len(dist):
        raise ValueError(f"top_k must lie in [1, {len(dist)}], got {k}")
    if k == len(dist):
        return _renormalized(dist.copy())
    keep = np.argsort(-dist, kind="stable")[:k]
    out = np.zeros_like(dist)
    out[keep] = dist[keep]
    return _renormalized(out)


def apply_top_p(dist: np.ndarray, p: float) -> np.ndarray:
    """Keep the smallest descending-sorted prefix reaching cumulative mass p."""
    if not 0 < p <= 1:
        raise ValueError(f"top_p must lie in (0, 1], got {p}")
    dist = np.asarray(dist, dtype=np.float64)
    order = np.argsort(-dist, kind="stable")
    csum = np.cumsum(dist[order])
    cut = int(np.searchsorted(csum, p - 1e-12))
    keep = order[: cut + 1]
    out = np.zeros_like(dist)
    out[keep] = dist[keep]
    return _renormalized(out)


def adjust_distribution(
    dist: np.ndarray, prev_note: int | None, cfg: SamplerConfig
) -> np.ndarray:
    """Full shaping pipeline: repeat decay, temperature, top-k, top-p, renorm."""
    out = apply_repeat_decay(dist, prev_note, cfg.repeat_decay)
    out = apply_temperature(out, cfg.temperature)
    out = apply_top_k(out, cfg.top_k)
    out = apply_top_p(out, cfg.top_p)
    return _renormalized(out)


def mask_start_token(dist: np.ndarray) -> np.ndarray:
    """Zero the start-token slot and renormalize; searches never emit 0."""
    out = np.asarray(dist, dtype=np.float64).copy()
    out[START_TOKEN] = 0.0
    return _renormalized(out)


def _check_search_args(beats: np.ndarray, cfg: SamplerConfig) -> np.ndarray:
    beats = np.asarray(beats, dtype=np.float64)
    if len(beats) < 1:
        raise ValueError("need at least one beat to generate notes for")
    if len(cfg.hints) > len(beats):
        raise ValueError(f"{len(cfg.hints)} hints but only {len(beats)} beats")
    return beats


def stochastic_search(
    model: SequenceStateMachine,
    beats: np.ndarray,
    cfg: SamplerConfig,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, float]:
    """Sample one note per beat from the adjusted model distributions.

    Positions covered by ``cfg.hints`` emit the hint verbatim (no random
    draw) while still advancing the state machine with it.  Returns the
    pitch sequence and the sum of adjusted log-probabilities of the
    emitted notes.
    """
    beats = _check_search_args(beats, cfg)
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    constants, state = model.sm_init(beats)
    notes = np.zeros(len(beats), dtype=np.int64)
    log_likelihood = 0.0
    prev = START_TOKEN
    for t in range(len(beats)):
        state, dist = model.sm_step(constants, state, prev)
        adjusted = adjust_distribution(
            mask_start_token(dist), prev if t > 0 else None, cfg
        )
        if t < len(cfg.hints):
            note = cfg.hints[t]
        else:
            note = int(rng.choice(len(adjusted), p=adjusted))
        assert note != START_TOKEN
        log_likelihood += _log(adjusted[note])
        notes[t] = note
        prev = note
    return notes, log_likelihood


def hybrid_beam_search(
    model: SequenceStateMachine,
    beats: np.ndarray,
    cfg: SamplerConfig,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, float]:
    """Beam search whose steps flip between expansion and sampling.

    ``beam_width`` hypotheses advance in lock-step.  Each unhinted step
    first draws the mode: with probability ``beam_prob`` every beam
    proposes its top ``beam_width`` adjusted notes and the pooled
    candidates are pruned back to the best ``beam_width`` by cumulative
    log-likelihood; otherwise every beam samples one note independently.
    Duplicate candidates are kept as-is, so beams only diversify through
    sampled steps.  Returns the notes and score of the best final beam.
    """
    beats = _check_search_args(beats, cfg)
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    n_beams = cfg.beam_width
    constants, state0 = model.sm_init(beats)
    beams = [Beam(state0, (), 0.0)] * n_beams

    for t in range(len(beats)):
        stepped = []
        for beam in beams:
            prev = beam.notes[-1] if beam.notes else START_TOKEN
            state, dist = model.sm_step(constants, beam.state, prev)
            adjusted = adjust_distribution(
                mask_start_token(dist), beam.notes[-1] if beam.notes else None, cfg
            )
            stepped.append((beam, state, adjusted))

        if t < len(cfg.hints):
            note = cfg.hints[t]
            beams = [
                Beam(state, beam.notes + (note,), beam.cum_log_likelihood + _log(adj[note]))
                for beam, state, adj in stepped
            ]
            continue

        if rng.random() < cfg.beam_prob:
            candidates = []
            for parent, (beam, state, adjusted) in enumerate(stepped):
                for note in np.argsort(-adjusted, kind="stable")[:n_beams]:
                    candidates.append(
                        (
                            beam.cum_log_likelihood + _log(adjusted[note]),
                            int(note),
                            parent,
                            state,
                            beam.notes,
                        )
                    )
            candidates.sort(key=lambda c: (-c[0], c[1], c[2]))
            beams = [
                Beam(state, notes + (note,), ll)
                for ll, note, _, state, notes in candidates[:n_beams]
            ]
        else:
            beams = [
                Beam(
                    state,
                    beam.notes + (note,),
                    beam.cum_log_likelihood + _log(adjusted[note]),
                )
                for beam, state, adjusted in stepped
                for note in (int(rng.choice(len(adjusted), p=adjusted)),)
            ]

    best = min(beams, key=lambda b: -b.cum_log_likelihood)
    assert START_TOKEN not in best.notes
    return np.asarray(best.notes, dtype=np.int64), float(best.cum_log_likelihood)
