"""Forward/backward kernel pairs for the sequence models.

Every layer is a pure function: ``*_forward`` returns (output, cache) and
the matching ``*_backward`` consumes upstream gradients plus that cache and
returns gradients for each input, in the forward argument order.  Recurrent
cells work on single vectors (no batch axis); sequence layers loop over
time explicitly so the chain of caches is the only state.

LSTM gate packing order throughout: input, forget, candidate, output.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "sigmoid",
    "softmax",
    "relu_forward",
    "relu_backward",
    "linear_forward",
    "linear_backward",
    "layer_norm_forward",
    "layer_norm_backward",
    "lstm_cell_forward",
    "lstm_cell_backward",
    "bilstm_forward",
    "bilstm_backward",
    "additive_attention_forward",
    "additive_attention_backward",
    "softmax_cross_entropy",
]


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = x - np.max(x, axis=axis, keepdims=True)
    ex = np.exp(shifted)
    return ex / np.sum(ex, axis=axis, keepdims=True)


def relu_forward(x: np.ndarray):
    return np.maximum(x, 0.0), (x > 0)


def relu_backward(d_out: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return d_out * mask


# ---------------------------------------------------------------- affine


def linear_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """out = x @ w + b for x of shape (..., I), w (I, O), b (O,)."""
    if x.shape[-1] != w.shape[0] or b.shape != (w.shape[1],):
        raise ValueError(
            f"linear shapes disagree: x {x.shape}, w {w.shape}, b {b.shape}"
        )
    return x @ w + b, (x, w)


def linear_backward(d_out: np.ndarray, cache):
    x, w = cache
    dx = d_out @ w.T
    dw = x.reshape(-1, x.shape[-1]).T @ d_out.reshape(-1, d_out.shape[-1])
    db = d_out.reshape(-1, d_out.shape[-1]).sum(axis=0)
    return dx, dw, db


# ------------------------------------------------------------- layer norm


def layer_norm_forward(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray, eps: float = 1e-5):
    """Normalize each row of x (..., D) to zero mean / unit variance, then scale."""
    if gamma.shape != (x.shape[-1],) or beta.shape != (x.shape[-1],):
        raise ValueError(
            f"layer_norm shapes disagree: x {x.shape}, gamma {gamma.shape}, beta {beta.shape}"
        )
    mean = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    x_hat = (x - mean) * inv_std
    return gamma * x_hat + beta, (x_hat, inv_std, gamma)


def layer_norm_backward(d_out: np.ndarray, cache):
    x_hat, inv_std, gamma = cache
    d_gamma = np.sum(d_out * x_hat, axis=tuple(range(d_out.ndim - 1)))
    d_beta = np.sum(d_out, axis=tuple(range(d_out.ndim - 1)))
    d_hat = d_out * gamma
    dx = inv_std * (
        d_hat
        - d_hat.mean(axis=-1, keepdims=True)
        - x_hat * np.mean(d_hat * x_hat, axis=-1, keepdims=True)
    )
    return dx, d_gamma, d_beta


# ---------------------------------------------------------------- LSTM cell


def lstm_cell_forward(
    x: np.ndarray,
    h: np.ndarray,
    c: np.ndarray,
    w_x: np.ndarray,
    w_h: np.ndarray,
    b: np.ndarray,
):
    """One step: gates from x and h, new cell c' = f*c + i*g, h' = o*tanh(c')."""
    d = h.shape[0]
    if x.shape != (w_x.shape[0],) or w_x.shape[1] != 4 * d or w_h.shape != (d, 4 * d):
        raise ValueError(
            f"lstm shapes disagree: x {x.shape}, h {h.shape}, w_x {w_x.shape}, w_h {w_h.shape}"
        )
    z = x @ w_x + h @ w_h + b
    gate_i = sigmoid(z[:d])
    gate_f = sigmoid(z[d : 2 * d])
    gate_g = np.tanh(z[2 * d : 3 * d])
    gate_o = sigmoid(z[3 * d :])
    c_next = gate_f * c + gate_i * gate_g
    tanh_c = np.tanh(c_next)
    h_next = gate_o * tanh_c
    cache = (x, h, c, w_x, w_h, gate_i, gate_f, gate_g, gate_o, tanh_c)
    return h_next, c_next, cache


def lstm_cell_backward(dh_next: np.ndarray, dc_next: np.ndarray, cache):
    x, h, c, w_x, w_h, gate_i, gate_f, gate_g, gate_o, tanh_c = cache
    dc_total = dc_next + dh_next * gate_o * (1.0 - tanh_c**2)
    d_o = dh_next * tanh_c
    d_f = dc_total * c
    d_i = dc_total * gate_g
    d_g = dc_total * gate_i
    dz = np.concatenate(
        [
            d_i * gate_i * (1.0 - gate_i),
            d_f * gate_f * (1.0 - gate_f),
            d_g * (1.0 - gate_g**2),
            d_o * gate_o * (1.0 - gate_o),
        ]
    )
    dx = w_x @ dz
    dh = w_h @ dz
    dc = dc_total * gate_f
    dw_x = np.outer(x, dz)
    dw_h = np.outer(h, dz)
    return dx, dh, dc, dw_x, dw_h, dz


# ---------------------------------------------------------------- biLSTM


def bilstm_forward(xs: np.ndarray, fwd_params, bwd_params):
    """Run one LSTM left-to-right and another right-to-left over xs (T, F).

    Returns (H, final_fwd, final_bwd, cache) where H[t] is the
    concatenation of the forward hidden state at t and the backward hidden
    state at t (the latter having consumed xs[T-1..t]).
    """
    n_steps = len(xs)
    if n_steps < 1:
        raise ValueError("bilstm needs at least one timestep")
    w_xf, w_hf, b_f = fwd_params
    w_xb, w_hb, b_b = bwd_params
    d = w_hf.shape[0]

    h = np.zeros(d)
    c = np.zeros(d)
    fwd_h = np.zeros((n_steps, d))
    fwd_caches = []
    for t in range(n_steps):
        h, c, cache = lstm_cell_forward(xs[t], h, c, w_xf, w_hf, b_f)
        fwd_h[t] = h
        fwd_caches.append(cache)
    final_fwd = h

    h = np.zeros(d)
    c = np.zeros(d)
    bwd_h = np.zeros((n_steps, d))
    bwd_caches = []
    for t in reversed(range(n_steps)):
        h, c, cache = lstm_cell_forward(xs[t], h, c, w_xb, w_hb, b_b)
        bwd_h[t] = h
        bwd_caches.append(cache)  # stored in processing order T-1..0
    final_bwd = h

    out = np.concatenate([fwd_h, bwd_h], axis=1)
    return out, final_fwd, final_bwd, (fwd_caches, bwd_caches, d)


def bilstm_backward(
    d_out: np.ndarray, d_final_fwd: np.ndarray, d_final_bwd: np.ndarray, cache
):
    """Gradients for bilstm_forward.

    Returns (d_xs, (dw_xf, dw_hf, db_f), (dw_xb, dw_hb, db_b)).
    """
    fwd_caches, bwd_caches, d = cache
    n_steps = len(fwd_caches)
    d_xs = np.zeros((n_steps, fwd_caches[0][0].shape[0]))

    dw_xf = np.zeros_like(fwd_caches[0][3])
    dw_hf = np.zeros_like(fwd_caches[0][4])
    db_f = np.zeros(4 * d)
    dh = d_final_fwd.copy()
    dc = np.zeros(d)
    for t in reversed(range(n_steps)):
        dh = dh + d_out[t, :d]
        dx, dh, dc, g_wx, g_wh, g_b = lstm_cell_backward(dh, dc, fwd_caches[t])
        d_xs[t] += dx
        dw_xf += g_wx
        dw_hf += g_wh
        db_f += g_b

    dw_xb = np.zeros_like(bwd_caches[0][3])
    dw_hb = np.zeros_like(bwd_caches[0][4])
    db_b = np.zeros(4 * d)
    dh = d_final_bwd.copy()
    dc = np.zeros(d)
    # The backward-direction chain was processed T-1..0, so its BPTT walks
    # original positions 0..T-1 (the reverse of processing order).
    for k in reversed(range(n_steps)):
        pos = n_steps - 1 - k  # original position of bwd_caches[k]
        dh = dh + d_out[pos, d:]
        dx, dh, dc, g_wx, g_wh, g_b = lstm_cell_backward(dh, dc, bwd_caches[k])
        d_xs[pos] += dx
        dw_xb += g_wx
        dw_hb += g_wh
        db_b += g_b

    return d_xs, (dw_xf, dw_hf, db_f), (dw_xb, dw_hb, db_b)


# ------------------------------------------------------ additive attention


def additive_attention_forward(
    s_prev: np.ndarray, annotations: np.ndarray, w: np.ndarray, b: np.ndarray, v: np.ndarray
):
    """Score each annotation row with a one-hidden-layer tanh scorer.

    score_j = v . tanh(concat(s_prev, annotations[j]) @ w + b); the
    softmaxed scores weight the annotation rows into a single context
    vector.  Returns (context, alpha, cache).
    """
    n_rows = len(annotations)
    if n_rows < 1:
        raise ValueError("attention needs at least one annotation row")
    joined = np.concatenate(
        [np.tile(s_prev, (n_rows, 1)), annotations], axis=1
    )  # (T, D + 2H)
    hidden = np.tanh(joined @ w + b)  # (T, A)
    scores = hidden @ v  # (T,)
    alpha = softmax(scores)
    context = alpha @ annotations
    cache = (s_prev, annotations, w, v, joined, hidden, alpha)
    return context, alpha, cache


def additive_attention_backward(d_context: np.ndarray, cache):
    """Gradients for additive_attention_forward given d(context).

    Returns (ds_prev, d_annotations, dw, db, dv).
    """
    s_prev, annotations, w, v, joined, hidden, alpha = cache
    d_alpha = annotations @ d_context  # (T,)
    d_annotations = np.outer(alpha, d_context)
    d_scores = alpha * (d_alpha - float(alpha @ d_alpha))  # softmax jacobian
    dv = hidden.T @ d_scores
    d_hidden = np.outer(d_scores, v)
    d_pre = d_hidden * (1.0 - hidden**2)
    dw = joined.T @ d_pre
    db = d_pre.sum(axis=0)
    d_joined = d_pre @ w.T
    d_dim = s_prev.shape[0]
    ds_prev = d_joined[:, :d_dim].sum(axis=0)
    d_annotations += d_joined[:, d_dim:]
    return ds_prev, d_annotations, dw, db, dv


# ---------------------------------------------------------------- loss


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean negative log-likelihood over timesteps, plus its logits gradient.

    grad = (softmax(logits) - onehot(labels)) / T, matching the mean
    reduction.
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n_steps, n_classes = logits.shape
    if labels.shape != (n_steps,):
        raise ValueError(f"labels shape {labels.shape} != ({n_steps},)")
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ValueError(f"labels must lie in [0, {n_classes})")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.sum(np.exp(shifted), axis=1))
    log_probs = shifted[np.arange(n_steps), labels] - log_z
    loss = float(-log_probs.mean())
    grad = softmax(logits, axis=1)
    grad[np.arange(n_steps), labels] -= 1.0
    grad /= n_steps
    return loss, grad
