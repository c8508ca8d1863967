"""Trainable-parameter plumbing: containers, initialization, Adam, clipping.

Everything is plain float64 numpy.  A Parameter pairs a value array with a
same-shaped gradient accumulator; layer backward passes add into the
gradients and the optimizer consumes and re-zeroes them between steps.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Parameter",
    "xavier_uniform",
    "AdamState",
    "adam_update",
    "Adam",
    "clip_global_norm",
    "global_norm",
]


@dataclass
class Parameter:
    """A value tensor plus its gradient accumulator."""

    value: np.ndarray
    grad: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.value = np.asarray(self.value, dtype=np.float64)
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        else:
            self.grad = np.asarray(self.grad, dtype=np.float64)
        if self.grad.shape != self.value.shape:
            raise ValueError(
                f"gradient shape {self.grad.shape} != value shape {self.value.shape}"
            )

    def zero_grad(self) -> None:
        self.grad[...] = 0.0


def xavier_uniform(
    shape: tuple[int, ...],
    rng: np.random.Generator,
    fan_in: int | None = None,
    fan_out: int | None = None,
) -> np.ndarray:
    """Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)).

    For 2-D shapes the fans default to (rows, cols); other ranks must pass
    them explicitly.
    """
    if fan_in is None or fan_out is None:
        if len(shape) != 2:
            raise ValueError(f"cannot infer fans for shape {shape}; pass them explicitly")
        fan_in, fan_out = shape
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


@dataclass
class AdamState:
    """Per-parameter first/second moment estimates and hyperparameters."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_shape(cls, shape: tuple[int, ...], **hypers) -> "AdamState":
        return cls(m=np.zeros(shape), v=np.zeros(shape), **hypers)


def adam_update(value: np.ndarray, grad: np.ndarray, state: AdamState) -> np.ndarray:
    """One bias-corrected Adam step; mutates ``state``, returns the new value."""
    if grad.shape != value.shape or state.m.shape != value.shape:
        raise ValueError("adam_update shape mismatch")
    state.t += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = state.m / (1.0 - state.beta1**state.t)
    v_hat = state.v / (1.0 - state.beta2**state.t)
    return value - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


def global_norm(params: dict[str, Parameter]) -> float:
    total = 0.0
    for p in params.values():
        total += float(np.sum(p.grad * p.grad))
    return float(np.sqrt(total))


def clip_global_norm(params: dict[str, Parameter], max_norm: float) -> float:
    """Scale all gradients so their joint L2 norm is at most ``max_norm``.

    Returns the pre-clip norm.
    """
    norm = global_norm(params)
    if norm > max_norm and norm > 0.0:
        scale = max_norm / norm
        for p in params.values():
            p.grad *= scale
    return norm


class Adam:
    """Adam over a named parameter dict, one moment state per parameter."""

    def __init__(
        self,
        params: dict[str, Parameter],
        lr: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = params
        self.states = {
            name: AdamState.for_shape(p.value.shape, lr=lr, beta1=beta1, beta2=beta2, eps=eps)
            for name, p in params.items()
        }

    @property
    def t(self) -> int:
        return next(iter(self.states.values())).t if self.states else 0

    def step(self) -> None:
        for name, p in self.params.items():
            p.value = adam_update(p.value, p.grad, self.states[name])

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()
