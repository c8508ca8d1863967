"""Finite-difference gradient verification for the layer kernels.

``grad_check`` drives any scalar-valued function of numpy arrays that also
returns its analytic input gradients, and reports the worst relative error
against central differences.  All checks run in float64; single precision
makes the difference quotient itself too noisy to judge anything.
"""

from __future__ import annotations

from collections.abc import Callable, Sequence

import numpy as np

__all__ = ["grad_check"]


def grad_check(
    fn: Callable[..., tuple[float, Sequence[np.ndarray | None]]],
    inputs: Sequence[np.ndarray],
    eps: float = 1e-5,
    rng: np.random.Generator | None = None,
    max_coords_per_input: int | None = None,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``fn(*inputs)`` must return ``(loss, grads)`` with one gradient per
    input (None to skip an input).  Inputs are perturbed in place and
    restored.  Relative error per coordinate is
    |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
    When ``max_coords_per_input`` is set, a random subset of coordinates is
    probed instead of every one (for larger tensors).
    """
    inputs = [np.asarray(arr, dtype=np.float64) for arr in inputs]
    _, grads = fn(*inputs)
    if len(grads) != len(inputs):
        raise ValueError(f"fn returned {len(grads)} gradients for {len(inputs)} inputs")
    worst = 0.0
    for arr, grad in zip(inputs, grads):
        if grad is None:
            continue
        if grad.shape != arr.shape:
            raise ValueError(f"gradient shape {grad.shape} != input shape {arr.shape}")
        flat = arr.ravel()
        grad_flat = grad.ravel()
        coords = np.arange(flat.size)
        if max_coords_per_input is not None and flat.size > max_coords_per_input:
            if rng is None:
                rng = np.random.default_rng(0)
            coords = rng.choice(flat.size, size=max_coords_per_input, replace=False)
        for idx in coords:
            original = flat[idx]
            flat[idx] = original + eps
            loss_plus, _ = fn(*inputs)
            flat[idx] = original - eps
            loss_minus, _ = fn(*inputs)
            flat[idx] = original
            numeric = (loss_plus - loss_minus) / (2.0 * eps)
            analytic = grad_flat[idx]
            err = abs(analytic - numeric) / max(1e-8, abs(analytic) + abs(numeric))
            worst = max(worst, err)
    return worst
